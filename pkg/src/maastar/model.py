"""DEC-POMDP instances: the core data type, the text model format and the built-in problems.

Tables are dense numpy arrays with joint actions and joint observations flattened
agent-major (agent 0 is the most significant digit):

    transition[s, ja, s2]      P(s2 | s, ja)
    observation_fn[s2, ja, jo] O(jo | s2, ja)   (conditioned on the destination state)
    reward[s, ja]              R(s, ja)
"""
from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Sequence

import numpy as np

PROB_TOL = 1e-9

BUILTIN_NAMES = ("tiger-a", "tiger-b", "channel")


class ModelError(ValueError):
    """Raised for malformed model documents. Always carries a location."""

    def __init__(self, message: str, line: int, column: int | None = None):
        self.line = line
        self.column = column
        self.reason = message
        where = f"line {line}" if column is None else f"line {line}, column {column}"
        super().__init__(f"{where}: {message}")


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class DecPomdp:
    states: tuple[str, ...]
    actions: tuple[tuple[str, ...], ...]
    observations: tuple[tuple[str, ...], ...]
    transition: np.ndarray
    observation_fn: np.ndarray
    reward: np.ndarray
    start: np.ndarray
    name: str = ""
    action_counts: tuple[int, ...] = field(init=False)
    observation_counts: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        put = object.__setattr__
        put(self, "states", tuple(self.states))
        put(self, "actions", tuple(tuple(a) for a in self.actions))
        put(self, "observations", tuple(tuple(o) for o in self.observations))
        if len(self.actions) != len(self.observations):
            raise ValueError("actions and observations must list the same number of agents")
        put(self, "action_counts", tuple(len(a) for a in self.actions))
        put(self, "observation_counts", tuple(len(o) for o in self.observations))
        for attr in ("transition", "observation_fn", "reward", "start"):
            put(self, attr, _frozen(getattr(self, attr)))
        S, JA, JO = len(self.states), self.n_joint_actions, self.n_joint_observations
        expected = {
            "transition": (S, JA, S),
            "observation_fn": (S, JA, JO),
            "reward": (S, JA),
            "start": (S,),
        }
        for attr, shape in expected.items():
            if getattr(self, attr).shape != shape:
                raise ValueError(f"{attr} has shape {getattr(self, attr).shape}, expected {shape}")

    @property
    def n_agents(self) -> int:
        return len(self.actions)

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_joint_actions(self) -> int:
        return math.prod(self.action_counts)

    @property
    def n_joint_observations(self) -> int:
        return math.prod(self.observation_counts)

    def joint_action(self, actions: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(actions), self.action_counts))

    def joint_observation(self, observations: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(observations), self.observation_counts))

    def joint_actions(self) -> list[tuple[int, ...]]:
        """All joint actions in canonical (flattened index) order."""
        return list(itertools.product(*(range(n) for n in self.action_counts)))

    def joint_observations(self) -> list[tuple[int, ...]]:
        return list(itertools.product(*(range(n) for n in self.observation_counts)))

    def with_start(self, start) -> "DecPomdp":
        return replace(self, start=np.asarray(start, dtype=float))

    def point_mass(self, state: int) -> np.ndarray:
        dist = np.zeros(self.n_states)
        dist[state] = 1.0
        return dist

    def same_tables(self, other: "DecPomdp") -> bool:
        return (
            self.states == other.states
            and self.actions == other.actions
            and self.observations == other.observations
            and all(
                np.array_equal(getattr(self, a), getattr(other, a))
                for a in ("transition", "observation_fn", "reward", "start")
            )
        )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def _joint_label(names: tuple[tuple[str, ...], ...], counts, index: int) -> str:
    parts = np.unravel_index(index, counts)
    return "(" + ", ".join(names[i][int(p)] for i, p in enumerate(parts)) + ")"


def _iter_violations(model: DecPomdp) -> Iterator[tuple[str, tuple, str]]:
    """Yields (table, index, message) for every broken invariant."""
    ja_label = lambda ja: _joint_label(model.actions, model.action_counts, ja)
    jo_label = lambda jo: _joint_label(model.observations, model.observation_counts, jo)
    st = model.states

    for name, table in (("transition", model.transition), ("observation", model.observation_fn)):
        bad = ~np.isfinite(table) | (table < 0) | (table > 1)
        for idx in zip(*np.nonzero(bad)):
            s, ja, k = (int(i) for i in idx)
            target = st[k] if name == "transition" else jo_label(k)
            yield name, (s, ja), (
                f"{name} entry [{st[s]} : {ja_label(ja)} : {target}] = {float(table[idx])!r} "
                "is not a probability"
            )
        sums = table.sum(axis=2)
        for s, ja in zip(*np.nonzero(~(np.abs(sums - 1.0) <= PROB_TOL))):
            s, ja = int(s), int(ja)
            yield name, (s, ja), (
                f"{name} row [{st[s]} : {ja_label(ja)}] sums to {float(sums[s, ja])!r}, expected 1"
            )

    for s, ja in zip(*np.nonzero(~np.isfinite(model.reward))):
        yield "reward", (int(s), int(ja)), (
            f"reward [{st[s]} : {ja_label(int(ja))}] = {float(model.reward[s, ja])!r} is not finite"
        )

    start = model.start
    for s in np.nonzero(~np.isfinite(start) | (start < 0) | (start > 1))[0]:
        yield "start", (int(s),), f"start weight for {st[s]} = {float(start[s])!r} is not a probability"
    total = start.sum()
    if not abs(total - 1.0) <= PROB_TOL:
        yield "start", (), f"start distribution sums to {float(total)!r}, expected 1"

    for label, names in [("states", [model.states])] + [
        (f"actions {i}", [a]) for i, a in enumerate(model.actions)
    ] + [(f"observations {i}", [o]) for i, o in enumerate(model.observations)]:
        for seq in names:
            if len(seq) == 0:
                yield "names", (), f"{label} is empty"
            elif len(set(seq)) != len(seq):
                yield "names", (), f"{label} contains duplicate names"
    if model.n_agents < 1:
        yield "names", (), "model has no agents"


def validate(model: DecPomdp) -> list[str]:
    """Returns every invariant violation of `model`; an empty list means the model is valid."""
    return [msg for _, _, msg in _iter_violations(model)]


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

_TOKEN = re.compile(r"\S+")


@dataclass
class _Field:
    tokens: list[tuple[str, int]]  # (text, 1-based column)
    column: int


def _split_fields(text: str, offset: int) -> list[_Field]:
    fields = []
    pos = 0
    for piece in text.split(":"):
        toks = [(m.group(), offset + pos + m.start() + 1) for m in _TOKEN.finditer(piece)]
        fields.append(_Field(toks, offset + pos + 1))
        pos += len(piece) + 1
    return fields


def _parse_number(tok: tuple[str, int], lineno: int) -> float:
    text, col = tok
    try:
        value = float(text)
    except ValueError:
        raise ModelError(f"expected a number, got {text!r}", lineno, col) from None
    if not math.isfinite(value):
        raise ModelError(f"number {text!r} is not finite", lineno, col)
    return value


def _check_names(names: list[tuple[str, int]], what: str, lineno: int, col: int) -> tuple[str, ...]:
    if not names:
        raise ModelError(f"{what} needs at least one name", lineno, col)
    seen = set()
    for text, c in names:
        if text == "*":
            raise ModelError(f"'*' cannot be used as a name in {what}", lineno, c)
        if text in seen:
            raise ModelError(f"duplicate name {text!r} in {what}", lineno, c)
        seen.add(text)
    return tuple(t for t, _ in names)


class _Entry:
    __slots__ = ("kind", "lineno", "fields", "head_col")

    def __init__(self, kind, lineno, fields, head_col):
        self.kind = kind
        self.lineno = lineno
        self.fields = fields
        self.head_col = head_col


def parse_model(text: str, name: str = "") -> DecPomdp:
    """Parses a model document into a validated DecPomdp.

    Raises ModelError naming the line (and column where one applies) of the first problem.
    """
    headers: dict[str, tuple[int, int, list[tuple[str, int]]]] = {}
    entries: list[_Entry] = []
    lines = text.splitlines()
    eof_line = max(len(lines), 1)

    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0]
        if not line.strip():
            continue
        if ":" not in line:
            first = _TOKEN.search(line)
            raise ModelError("expected '<keyword>: ...'", lineno, first.start() + 1)
        head, rest = line.split(":", 1)
        head_tokens = [(m.group(), m.start() + 1) for m in _TOKEN.finditer(head)]
        rest_offset = len(head) + 1
        if not head_tokens:
            raise ModelError("missing keyword before ':'", lineno, len(head) + 1)
        keyword, kcol = head_tokens[0]
        if keyword in ("T", "O", "R"):
            if len(head_tokens) != 1:
                raise ModelError(f"unexpected token after {keyword}", lineno, head_tokens[1][1])
            entries.append(_Entry(keyword, lineno, _split_fields(rest, rest_offset), kcol))
            continue
        if keyword in ("agents", "states", "start"):
            if len(head_tokens) != 1:
                raise ModelError(f"unexpected token after {keyword}", lineno, head_tokens[1][1])
            key = keyword
        elif keyword in ("actions", "observations"):
            if len(head_tokens) != 2:
                raise ModelError(f"expected '{keyword} <agent>:'", lineno, kcol)
            idx_text, icol = head_tokens[1]
            if not idx_text.isdigit():
                raise ModelError(f"agent index must be a non-negative integer, got {idx_text!r}", lineno, icol)
            key = f"{keyword} {int(idx_text)}"
        else:
            raise ModelError(f"unknown keyword {keyword!r}", lineno, kcol)
        if ":" in rest:
            raise ModelError("unexpected ':'", lineno, rest_offset + rest.index(":") + 1)
        if key in headers:
            raise ModelError(f"duplicate '{key}' declaration (first on line {headers[key][0]})", lineno, kcol)
        values = [(m.group(), rest_offset + m.start() + 1) for m in _TOKEN.finditer(rest)]
        headers[key] = (lineno, kcol, values)

    def need(key: str) -> tuple[int, int, list[tuple[str, int]]]:
        if key not in headers:
            raise ModelError(f"missing '{key}:' declaration", eof_line)
        return headers[key]

    ln, col, vals = need("agents")
    if len(vals) != 1 or not vals[0][0].isdigit() or int(vals[0][0]) < 1:
        raise ModelError("'agents:' expects one positive integer", ln, vals[0][1] if vals else col)
    n = int(vals[0][0])
    if n > 16:
        raise ModelError(f"too many agents ({n})", ln, vals[0][1])
    for key, (kln, kcol, _) in headers.items():
        kind, _, idx = key.partition(" ")
        if idx and int(idx) >= n:
            raise ModelError(f"agent index {idx} out of range for {n} agents", kln, kcol)

    ln, col, vals = need("states")
    states = _check_names(vals, "states", ln, col)
    actions, observations = [], []
    for i in range(n):
        ln, col, vals = need(f"actions {i}")
        actions.append(_check_names(vals, f"actions {i}", ln, col))
        ln, col, vals = need(f"observations {i}")
        observations.append(_check_names(vals, f"observations {i}", ln, col))

    ln, col, vals = need("start")
    if len(vals) != len(states):
        raise ModelError(f"start lists {len(vals)} weights for {len(states)} states", ln, col)
    start = [_parse_number(v, ln) for v in vals]
    for (text, c), p in zip(vals, start):
        if not 0.0 <= p <= 1.0:
            raise ModelError(f"start weight {text!r} is not a probability", ln, c)

    a_counts = tuple(len(a) for a in actions)
    o_counts = tuple(len(o) for o in observations)
    S = len(states)
    JA, JO = math.prod(a_counts), math.prod(o_counts)
    if S * JA * max(S, JO) > 50_000_000:
        raise ModelError("model tables are too large", ln)
    state_index = {s: i for i, s in enumerate(states)}
    action_index = [{a: k for k, a in enumerate(acts)} for acts in actions]
    obs_index = [{o: k for k, o in enumerate(obs)} for obs in observations]

    transition = np.zeros((S, JA, S))
    obs_fn = np.zeros((S, JA, JO))
    reward = np.zeros((S, JA))
    # last line that wrote into each row, for locating row-sum failures
    t_rows = np.zeros((S, JA), dtype=np.int64)
    o_rows = np.zeros((S, JA), dtype=np.int64)
    specific: dict[tuple, int] = {}

    def one(f: _Field, what: str, lineno: int) -> tuple[str, int]:
        if len(f.tokens) != 1:
            col = f.tokens[1][1] if len(f.tokens) > 1 else f.column
            raise ModelError(f"expected exactly one {what}", lineno, col)
        return f.tokens[0]

    def resolve(tok: tuple[str, int], table: dict[str, int], what: str, lineno: int) -> list[int]:
        text, c = tok
        if text == "*":
            return list(range(len(table)))
        if text not in table:
            raise ModelError(f"unknown {what} {text!r}", lineno, c)
        return [table[text]]

    def resolve_joint(f: _Field, tables, counts, what: str, lineno: int) -> list[int]:
        if len(f.tokens) != n:
            raise ModelError(f"expected {n} {what} names, got {len(f.tokens)}", lineno, f.column)
        choices = [resolve(tok, tables[i], f"{what} for agent {i}", lineno) for i, tok in enumerate(f.tokens)]
        return [int(np.ravel_multi_index(c, counts)) for c in itertools.product(*choices)]

    for e in entries:
        ln, fs = e.lineno, e.fields
        arity = {"T": 4, "O": 4, "R": 3}[e.kind]
        if len(fs) != arity:
            raise ModelError(f"{e.kind} entry needs {arity} ':'-separated fields, got {len(fs)}", ln, e.head_col)
        value_tok = one(fs[-1], "value", ln)
        value = _parse_number(value_tok, ln)
        if e.kind in ("T", "O") and not 0.0 <= value <= 1.0:
            raise ModelError(f"probability {value_tok[0]!r} outside [0, 1]", ln, value_tok[1])
        wild = any(t == "*" for f in fs[:-1] for t, _ in f.tokens)
        if e.kind == "T":
            ss = resolve(one(fs[0], "state", ln), state_index, "state", ln)
            jas = resolve_joint(fs[1], action_index, a_counts, "action", ln)
            s2s = resolve(one(fs[2], "state", ln), state_index, "state", ln)
            cells = [(s, ja, s2) for s in ss for ja in jas for s2 in s2s]
        elif e.kind == "O":
            ss = resolve(one(fs[0], "state", ln), state_index, "state", ln)
            jas = resolve_joint(fs[1], action_index, a_counts, "action", ln)
            jos = resolve_joint(fs[2], obs_index, o_counts, "observation", ln)
            cells = [(s, ja, jo) for s in ss for ja in jas for jo in jos]
        else:
            ss = resolve(one(fs[0], "state", ln), state_index, "state", ln)
            jas = resolve_joint(fs[1], action_index, a_counts, "action", ln)
            cells = [(s, ja) for s in ss for ja in jas]
        if not wild:
            key = (e.kind,) + cells[0]
            if key in specific:
                raise ModelError(f"duplicate {e.kind} entry (first on line {specific[key]})", ln, e.head_col)
            specific[key] = ln
        idx = tuple(np.array(c) for c in zip(*cells))
        if e.kind == "T":
            transition[idx] = value
            t_rows[idx[0], idx[1]] = ln
        elif e.kind == "O":
            obs_fn[idx] = value
            o_rows[idx[0], idx[1]] = ln
        else:
            reward[idx] = value

    model = DecPomdp(states, actions, observations, transition, obs_fn, reward, start, name=name)
    for table, index, message in _iter_violations(model):
        if table == "transition" and index:
            line = int(t_rows[index]) or eof_line
        elif table == "observation" and index:
            line = int(o_rows[index]) or eof_line
        elif table == "start":
            line = headers["start"][0]
        else:
            line = eof_line
        raise ModelError(message, line)
    return model


def serialize(model: DecPomdp) -> str:
    """Writes `model` in the text format; parse_model(serialize(m)) reproduces m exactly."""
    out = []
    if model.name:
        out.append(f"# {model.name}")
    out.append(f"agents: {model.n_agents}")
    out.append("states: " + " ".join(model.states))
    out.append("start: " + " ".join(repr(float(p)) for p in model.start))
    for i, acts in enumerate(model.actions):
        out.append(f"actions {i}: " + " ".join(acts))
    for i, obs in enumerate(model.observations):
        out.append(f"observations {i}: " + " ".join(obs))

    def jlabel(names, counts, index):
        parts = np.unravel_index(index, counts)
        return " ".join(names[i][int(p)] for i, p in enumerate(parts))

    ac, oc = model.action_counts, model.observation_counts
    st = model.states
    for s, ja, s2 in zip(*np.nonzero(model.transition)):
        out.append(f"T: {st[s]} : {jlabel(model.actions, ac, ja)} : {st[s2]} : {float(model.transition[s, ja, s2])!r}")
    for s2, ja, jo in zip(*np.nonzero(model.observation_fn)):
        out.append(
            f"O: {st[s2]} : {jlabel(model.actions, ac, ja)} : "
            f"{jlabel(model.observations, oc, jo)} : {float(model.observation_fn[s2, ja, jo])!r}"
        )
    for s, ja in zip(*np.nonzero(model.reward)):
        out.append(f"R: {st[s]} : {jlabel(model.actions, ac, ja)} : {float(model.reward[s, ja])!r}")
    return "\n".join(out) + "\n"


def load_model(path) -> DecPomdp:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    return parse_model(text, name=str(path))


# ---------------------------------------------------------------------------
# built-in problems
# ---------------------------------------------------------------------------

def _tiger(joint_tiger_reward: float, name: str) -> DecPomdp:
    LISTEN, OPEN_LEFT, OPEN_RIGHT = 0, 1, 2
    states = ("tiger-left", "tiger-right")
    acts = ("listen", "open-left", "open-right")
    obs = ("hear-left", "hear-right")
    n_ja = 9
    T = np.zeros((2, n_ja, 2))
    O = np.zeros((2, n_ja, 4))
    R = np.zeros((2, n_ja))
    for a1, a2 in itertools.product(range(3), repeat=2):
        ja = a1 * 3 + a2
        for s in range(2):
            tiger_door = OPEN_LEFT if s == 0 else OPEN_RIGHT
            if a1 == a2 == LISTEN:
                T[s, ja, s] = 1.0
                for o1, o2 in itertools.product(range(2), repeat=2):
                    p1 = 0.85 if o1 == s else 0.15
                    p2 = 0.85 if o2 == s else 0.15
                    O[s, ja, o1 * 2 + o2] = p1 * p2
            else:
                T[s, ja, :] = 0.5
                O[s, ja, :] = 0.25

            opened = [a for a in (a1, a2) if a != LISTEN]
            if not opened:
                r = -2.0
            elif len(opened) == 2 and a1 != a2:
                r = -100.0
            elif len(opened) == 2:
                r = joint_tiger_reward if a1 == tiger_door else 20.0
            else:
                r = -101.0 if opened[0] == tiger_door else 9.0
            R[s, ja] = r
    return DecPomdp(states, (acts, acts), (obs, obs), T, O, R, (0.5, 0.5), name=name)


def channel(collision_accuracy: float = 1.0) -> DecPomdp:
    """Two-agent broadcast channel.

    Each agent observes a collision bit that is right with probability
    `collision_accuracy`. The default noise-free bit reproduces the published
    evaluated-pair counts; 0.9 gives the same optimal values.
    """
    SEND = 0
    FULL, EMPTY = 0, 1
    refill = (0.9, 0.1)
    correct = collision_accuracy
    states = ("full-full", "full-empty", "empty-full", "empty-empty")
    acts = ("send", "wait")
    obs = ("collision", "no-collision")
    T = np.zeros((4, 4, 4))
    O = np.zeros((4, 4, 4))
    R = np.zeros((4, 4))
    for b1, b2 in itertools.product((FULL, EMPTY), repeat=2):
        s = b1 * 2 + b2
        for a1, a2 in itertools.product(range(2), repeat=2):
            ja = a1 * 2 + a2
            buffers = [b1, b2]
            sends = (a1 == SEND, a2 == SEND)
            if sends[0] != sends[1]:
                sender = 0 if sends[0] else 1
                if buffers[sender] == FULL:
                    R[s, ja] = 1.0
                    buffers[sender] = EMPTY
            # empty buffers (including one just emptied) refill independently
            per_agent = []
            for i, b in enumerate(buffers):
                if b == FULL:
                    per_agent.append({FULL: 1.0})
                else:
                    per_agent.append({FULL: refill[i], EMPTY: 1.0 - refill[i]})
            for n1, p1 in per_agent[0].items():
                for n2, p2 in per_agent[1].items():
                    T[s, ja, n1 * 2 + n2] += p1 * p2
            collision = 0 if all(sends) else 1
            for o1, o2 in itertools.product(range(2), repeat=2):
                q1 = correct if o1 == collision else 1 - correct
                q2 = correct if o2 == collision else 1 - correct
                O[:, ja, o1 * 2 + o2] = q1 * q2
    start = (1.0, 0.0, 0.0, 0.0)
    return DecPomdp(states, (acts, acts), (obs, obs), T, O, R, start, name="channel")


def builtin(name: str) -> DecPomdp:
    """Returns one of the built-in benchmark problems: tiger-a, tiger-b or channel."""
    if name == "tiger-a":
        return _tiger(-50.0, "tiger-a")
    if name == "tiger-b":
        return _tiger(0.0, "tiger-b")
    if name == "channel":
        return channel()
    raise KeyError(f"unknown problem {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
