"""Policy trees, policy vectors and incremental child enumeration.

A depth-t tree for an agent with m observations is stored as a flat tuple of action
indices, level by level; inside a level, nodes are ordered by the lexicographic rank
of the observation history that reaches them (first observation most significant).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

from .model import DecPomdp

INDEX_LIMIT = 2**63 - 1


def level_offset(n_obs: int, level: int) -> int:
    """Number of nodes above `level` in a complete n_obs-ary tree."""
    if n_obs == 1:
        return level
    return (n_obs**level - 1) // (n_obs - 1)


def history_rank(history: Sequence[int], n_obs: int) -> int:
    rank = 0
    for o in history:
        rank = rank * n_obs + o
    return rank


def history_from_rank(rank: int, length: int, n_obs: int) -> tuple[int, ...]:
    out = []
    for _ in range(length):
        rank, o = divmod(rank, n_obs)
        out.append(o)
    return tuple(reversed(out))


@dataclass(frozen=True)
class PolicyTree:
    agent: int
    n_obs: int
    depth: int
    actions: tuple[int, ...]

    def __post_init__(self):
        if len(self.actions) != level_offset(self.n_obs, self.depth):
            raise ValueError(
                f"depth-{self.depth} tree over {self.n_obs} observations needs "
                f"{level_offset(self.n_obs, self.depth)} nodes, got {len(self.actions)}"
            )

    def level(self, level: int) -> tuple[int, ...]:
        lo = level_offset(self.n_obs, level)
        return self.actions[lo : lo + self.n_obs**level]

    def prefix(self, depth: int) -> "PolicyTree":
        return PolicyTree(self.agent, self.n_obs, depth, self.actions[: level_offset(self.n_obs, depth)])

    def subtree(self, history: Sequence[int]) -> "PolicyTree":
        """The tree rooted at the node addressed by `history`."""
        start = len(history)
        if start >= self.depth:
            raise ValueError("history reaches below the leaves")
        rank = history_rank(history, self.n_obs)
        acts = []
        for lvl in range(start, self.depth):
            width = self.n_obs ** (lvl - start)
            lo = level_offset(self.n_obs, lvl) + rank * width
            acts.extend(self.actions[lo : lo + width])
        return PolicyTree(self.agent, self.n_obs, self.depth - start, tuple(acts))


@dataclass(frozen=True)
class PolicyVector:
    trees: tuple[PolicyTree, ...]

    @property
    def depth(self) -> int:
        return self.trees[0].depth if self.trees else 0

    def __post_init__(self):
        object.__setattr__(self, "trees", tuple(self.trees))
        if len({t.depth for t in self.trees}) > 1:
            raise ValueError("all trees of a policy vector must have the same depth")
        for i, t in enumerate(self.trees):
            if t.agent != i:
                raise ValueError(f"tree {i} belongs to agent {t.agent}")

    def prefix(self, depth: int) -> "PolicyVector":
        return PolicyVector(tuple(t.prefix(depth) for t in self.trees))

    @classmethod
    def empty(cls, model: DecPomdp) -> "PolicyVector":
        return cls(tuple(PolicyTree(i, m, 0, ()) for i, m in enumerate(model.observation_counts)))

    @classmethod
    def from_actions(cls, model: DecPomdp, actions: Sequence[Sequence[int]]) -> "PolicyVector":
        trees = []
        for i, acts in enumerate(actions):
            m = model.observation_counts[i]
            depth = 0
            while level_offset(m, depth) < len(acts):
                depth += 1
            trees.append(PolicyTree(i, m, depth, tuple(int(a) for a in acts)))
        return cls(tuple(trees))

    @classmethod
    def constant(cls, model: DecPomdp, depth: int, actions: Sequence[int]) -> "PolicyVector":
        """Every node of agent i's tree holds actions[i]."""
        return cls(
            tuple(
                PolicyTree(i, m, depth, (actions[i],) * level_offset(m, depth))
                for i, m in enumerate(model.observation_counts)
            )
        )


def action_at(tree: PolicyTree, history: Sequence[int]) -> int:
    """Action stored at the node reached by `history` (the empty history is the root)."""
    if len(history) >= tree.depth:
        raise ValueError(f"history of length {len(history)} is too long for a depth-{tree.depth} tree")
    for o in history:
        if not 0 <= o < tree.n_obs:
            raise ValueError(f"observation index {o} out of range")
    return tree.actions[level_offset(tree.n_obs, len(history)) + history_rank(history, tree.n_obs)]


def root_vectors(model: DecPomdp) -> list[PolicyVector]:
    return [PolicyVector.constant(model, 1, ja) for ja in model.joint_actions()]


def num_children(model: DecPomdp, depth: int) -> int:
    """Number of distinct depth+1 children of any depth-`depth` policy vector."""
    total = 1
    for a, m in zip(model.action_counts, model.observation_counts):
        total *= a ** (m**depth)
        if total > INDEX_LIMIT:
            raise OverflowError(f"a depth-{depth} vector has more than 2**63 - 1 children")
    return total


def leaf_radix(model: DecPomdp, depth: int) -> tuple[int, ...]:
    """Action counts per new leaf, agent-major, leaves in history order."""
    out: list[int] = []
    for a, m in zip(model.action_counts, model.observation_counts):
        out.extend([a] * (m**depth))
    return tuple(out)


def decode_child(model: DecPomdp, depth: int, index: int) -> list[tuple[int, ...]]:
    """New leaf actions per agent for child number `index` of a depth-`depth` vector."""
    per_agent = []
    for a, m in zip(reversed(model.action_counts), reversed(model.observation_counts)):
        leaves = []
        for _ in range(m**depth):
            index, d = divmod(index, a)
            leaves.append(d)
        per_agent.append(tuple(reversed(leaves)))
    if index:
        raise ValueError("child index out of range")
    return per_agent[::-1]


def encode_child(model: DecPomdp, leaves: Sequence[Sequence[int]]) -> int:
    index = 0
    for a, acts in zip(model.action_counts, leaves):
        for d in acts:
            index = index * a + d
    return index


def make_child(parent: PolicyVector, leaves: Sequence[Sequence[int]]) -> PolicyVector:
    return PolicyVector(
        tuple(
            PolicyTree(t.agent, t.n_obs, t.depth + 1, t.actions + tuple(new))
            for t, new in zip(parent.trees, leaves)
        )
    )


@dataclass
class ExpansionCursor:
    """Position of the next child to hand out for one parent."""

    radix: tuple[int, ...]
    total: int
    next_child: int = 0
    depth: int = field(default=0)

    @classmethod
    def for_parent(cls, model: DecPomdp, parent: PolicyVector) -> "ExpansionCursor":
        return cls(leaf_radix(model, parent.depth), num_children(model, parent.depth), 0, parent.depth)

    @property
    def exhausted(self) -> bool:
        return self.next_child >= self.total


def expand_child(model: DecPomdp, parent: PolicyVector, cursor: ExpansionCursor) -> PolicyVector | None:
    """Builds the child the cursor points at and advances it; None once every child was produced."""
    if cursor.depth != parent.depth:
        raise ValueError("cursor does not belong to this parent")
    if cursor.exhausted:
        return None
    leaves = decode_child(model, parent.depth, cursor.next_child)
    cursor.next_child += 1
    return make_child(parent, leaves)


def all_trees(n_actions: int, n_obs: int, depth: int):
    """Yields every depth-`depth` action tuple for one agent, in counting order."""
    size = level_offset(n_obs, depth)
    for code in range(n_actions**size):
        acts = []
        for _ in range(size):
            code, d = divmod(code, n_actions)
            acts.append(d)
        yield tuple(reversed(acts))


# ---------------------------------------------------------------------------
# export / persistence
# ---------------------------------------------------------------------------

def _dot_quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"') + '"'


def tree_to_dot(tree: PolicyTree, action_names: Sequence[str], obs_names: Sequence[str]) -> str:
    lines = [f"digraph agent{tree.agent} {{", "  rankdir=TB;"]
    for lvl in range(tree.depth):
        ids = []
        for rank in range(tree.n_obs**lvl):
            node = level_offset(tree.n_obs, lvl) + rank
            ids.append(f"n{node}")
            lines.append(f"  n{node} [label={_dot_quote(action_names[tree.actions[node]])}];")
        lines.append("  { rank=same; " + " ".join(ids) + " }")
    for lvl in range(tree.depth - 1):
        for rank in range(tree.n_obs**lvl):
            parent = level_offset(tree.n_obs, lvl) + rank
            for o in range(tree.n_obs):
                child = level_offset(tree.n_obs, lvl + 1) + rank * tree.n_obs + o
                lines.append(f"  n{parent} -> n{child} [label={_dot_quote(obs_names[o])}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def vector_to_dot(vector: PolicyVector, action_names, obs_names) -> list[str]:
    """One DOT digraph per agent."""
    return [tree_to_dot(t, action_names[t.agent], obs_names[t.agent]) for t in vector.trees]


def dump_policy(vector: PolicyVector, model: DecPomdp, **extra) -> str:
    payload = {
        "format": "maastar-policy/1",
        "depth": vector.depth,
        "actions": [list(a) for a in model.actions],
        "observations": [list(o) for o in model.observations],
        "trees": [list(t.actions) for t in vector.trees],
    }
    payload.update(extra)
    return json.dumps(payload, indent=2) + "\n"


@dataclass
class SavedPolicy:
    vector: PolicyVector
    action_names: list[list[str]]
    observation_names: list[list[str]]
    meta: dict


def load_policy(text: str) -> SavedPolicy:
    data = json.loads(text)
    if data.get("format") != "maastar-policy/1":
        raise ValueError("not a saved maastar policy")
    trees = []
    for i, acts in enumerate(data["trees"]):
        m = len(data["observations"][i])
        trees.append(PolicyTree(i, m, data["depth"], tuple(acts)))
    meta = {k: v for k, v in data.items() if k not in ("format", "depth", "actions", "observations", "trees")}
    return SavedPolicy(PolicyVector(tuple(trees)), data["actions"], data["observations"], meta)
