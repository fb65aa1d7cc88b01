"""Best-first search over policy vectors, plus the exhaustive reference solver.

Children of a node are handed out one per selection, in the mixed-radix order of
`policy.decode_child`. Their values are computed in blocks: for a depth-t parent with
history weights W, a child's added reward and heuristic are sums over joint leaf
histories of terms that depend only on each agent's leaf action, so a block of children
is obtained by contracting one agent at a time.

Parents one level above the horizon are special-cased: their children are never
inserted, so such a parent stays the selected node until it is exhausted or pruned,
and its children can be scanned in bulk against the incumbent with identical results.
"""
from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .evaluation import evaluate, forward_weights
from .heuristics import HeuristicTable, mdp_values, recursive_values
from .model import DecPomdp
from .policy import (
    PolicyTree,
    PolicyVector,
    all_trees,
    decode_child,
    level_offset,
    make_child,
    num_children,
)

HEURISTICS = ("mdp", "recursive")

LAST_LEVEL_BLOCK = 1 << 18
INNER_BLOCK = 1 << 12
ROW_LIMIT = 1 << 18  # largest last-agent child count built by outer sums
TIME_CHECK_EVERY = 1024


class BudgetError(RuntimeError):
    pass


@dataclass
class Options:
    horizon: int
    heuristic: str = "mdp"
    weight: float = 1.0
    on_incumbent: Callable[[float, float, PolicyVector], None] | None = None
    node_budget: int | None = None
    time_budget: float | None = None
    prune: bool = True

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.heuristic not in HEURISTICS:
            raise ValueError(f"heuristic must be one of {HEURISTICS}")
        if not 0.0 < self.weight <= 1.0:
            raise ValueError("weight must lie in (0, 1]")
        if self.node_budget is not None and self.node_budget < 0:
            raise ValueError("node budget must be nonnegative")
        if self.time_budget is not None and self.time_budget < 0:
            raise ValueError("time budget must be nonnegative")


@dataclass(frozen=True)
class IncumbentEvent:
    elapsed: float
    value: float
    evaluated: int  # evaluated_count at the moment the incumbent was found


@dataclass
class SearchStats:
    evaluated_count: int = 0
    max_open_size: int = 0
    incumbent_trace: list[IncumbentEvent] = field(default_factory=list)
    subsearch_evaluated: int = 0
    wall_time: float = 0.0


@dataclass
class SearchResult:
    vector: PolicyVector | None
    value: float
    stats: SearchStats
    proven_optimal: bool


def build_table(model: DecPomdp, horizon: int, kind: str) -> HeuristicTable:
    if kind == "mdp":
        return mdp_values(model, horizon)
    if kind == "recursive":
        return recursive_values(model, horizon)
    raise ValueError(f"unknown heuristic {kind!r}")


def _digits(codes: np.ndarray, base: int, width: int) -> np.ndarray:
    powers = base ** np.arange(width - 1, -1, -1, dtype=np.int64)
    return (codes[:, None] // powers[None, :]) % base


class _Children:
    """Rewards and heuristic values of every child of one parent, computed block-wise."""

    def __init__(self, model: DecPomdp, weights: np.ndarray, next_row: np.ndarray | None):
        n = model.n_agents
        self.n = n
        self.A = model.action_counts
        self.L = weights.shape[:n]
        self.K = [a**l for a, l in zip(self.A, self.L)]
        reward = (weights @ model.reward).reshape(self.L + self.A)
        parts = [reward]
        if next_row is not None:
            future = weights @ (model.transition @ next_row)
            parts.append(future.reshape(self.L + self.A))
        Z = np.stack(parts, axis=-1)
        order = []
        for i in range(n):
            order += [i, n + i]
        order.append(2 * n)
        self.Z = np.ascontiguousarray(Z.transpose(order))
        self.has_h = next_row is not None

    def block(self, start: int, stop: int) -> np.ndarray:
        """Array (stop - start, c): added reward (and next heuristic) per child index."""
        n, A, L, K = self.n, self.A, self.L, self.K
        if n == 1:
            p0, X = 0, self.Z[None]
        else:
            p0 = start // K[-1]
            pu = np.arange(p0, (stop - 1) // K[-1] + 1, dtype=np.int64)
            X = self._fix_leading(pu)
        if K[-1] > ROW_LIMIT:
            return self._gather(X, start, stop, p0)
        # with the other agents fixed, a child's terms separate over the last agent's
        # leaves: build all K[-1] sums as nested outer sums (first leaf most significant)
        P, c = X.shape[0], X.shape[-1]
        rows = X[:, 0]
        for leaf in range(1, L[-1]):
            rows = (rows[:, :, None, :] + X[:, leaf][:, None, :, :]).reshape(P, -1, c)
        off = start - p0 * K[-1]
        return rows.reshape(-1, c)[off : off + stop - start]

    def _fix_leading(self, pu: np.ndarray) -> np.ndarray:
        """Contracts agents 0..n-2 for each leading code in `pu`: (P, L_last, A_last, c)."""
        n, A, L, K = self.n, self.A, self.L, self.K
        codes = []
        rem = pu
        for i in range(n - 2, -1, -1):
            codes.append(rem % K[i])
            rem = rem // K[i]
        codes.reverse()
        X = self.Z
        P = len(pu)
        for i in range(n - 1):
            D = _digits(codes[i], A[i], L[i])
            leaves = np.arange(L[i])[None, :]
            if i == 0:
                X = X[leaves, D]
            else:
                X = X[np.arange(P)[:, None], leaves, D]
            X = X.sum(axis=1)
        return X

    def _gather(self, X: np.ndarray, start: int, stop: int, p0: int) -> np.ndarray:
        A, L, K = self.A, self.L, self.K
        idx = np.arange(start, stop, dtype=np.int64)
        rel = idx // K[-1] - p0
        D = _digits(idx % K[-1], A[-1], L[-1])
        out = np.zeros((len(idx), X.shape[-1]))
        for leaf in range(L[-1]):
            out += X[rel, leaf, D[:, leaf]]
        return out


class _Node:
    __slots__ = (
        "vector", "depth", "value", "h", "f", "key", "seq", "alive",
        "next_child", "total", "children", "block_start", "block",
    )

    def __init__(self, vector, depth, value, h, weight, seq):
        self.vector = vector
        self.depth = depth
        self.value = value
        self.h = h
        self.f = value + h
        self.key = value + weight * h
        self.seq = seq
        self.alive = True
        self.next_child = 0
        self.total = 0
        self.children = None
        self.block_start = 0
        self.block = None


class _Search:
    def __init__(self, model: DecPomdp, options: Options, table: HeuristicTable):
        self.model = model
        self.opt = options
        self.T = options.horizon
        self.table = table
        self.stats = SearchStats()
        self.heap: list = []
        self.live = 0
        self.dead = 0
        self.seq = itertools.count()
        self.inc_value = -math.inf
        self.inc_vector: PolicyVector | None = None
        self.t0 = time.perf_counter()
        self.out_of_budget = False

    # -- open list -------------------------------------------------------

    def push(self, node: _Node) -> None:
        heapq.heappush(self.heap, (-node.key, -node.depth, node.seq, node))
        self.live += 1
        if self.live > self.stats.max_open_size:
            self.stats.max_open_size = self.live

    def kill(self, node: _Node) -> None:
        if node.alive:
            node.alive = False
            node.children = None
            node.block = None
            self.live -= 1
            self.dead += 1

    def top(self) -> _Node | None:
        heap = self.heap
        while heap and not heap[0][3].alive:
            heapq.heappop(heap)
            self.dead -= 1
        return heap[0][3] if heap else None

    def prune(self) -> None:
        bound = self.inc_value
        for entry in self.heap:
            node = entry[3]
            if node.alive and node.f <= bound:
                self.kill(node)
        if self.dead > self.live:
            self.heap = [e for e in self.heap if e[3].alive]
            heapq.heapify(self.heap)
            self.dead = 0

    # -- bookkeeping -----------------------------------------------------

    def budget_left(self) -> int | None:
        if self.opt.node_budget is None:
            return None
        return self.opt.node_budget - self.stats.evaluated_count

    def time_up(self) -> bool:
        tb = self.opt.time_budget
        return tb is not None and time.perf_counter() - self.t0 >= tb

    def improve(self, value: float, vector: PolicyVector) -> None:
        self.inc_value = value
        self.inc_vector = vector
        elapsed = time.perf_counter() - self.t0
        self.stats.incumbent_trace.append(IncumbentEvent(elapsed, value, self.stats.evaluated_count))
        if self.opt.on_incumbent is not None:
            self.opt.on_incumbent(elapsed, value, vector)
        if self.opt.prune:
            self.prune()

    # -- expansion -------------------------------------------------------

    def prepare(self, node: _Node) -> None:
        _, weights = forward_weights(self.model, node.vector)
        steps_after = self.T - node.depth - 1
        next_row = self.table.row(steps_after) if steps_after > 0 else None
        node.children = _Children(self.model, weights, next_row)
        node.total = num_children(self.model, node.depth)

    def child_values(self, node: _Node, block_size: int) -> tuple[np.ndarray, int]:
        """Block holding node.next_child, and the offset of next_child inside it."""
        k = node.next_child
        if node.block is None or not node.block_start <= k < node.block_start + len(node.block):
            start = k - k % block_size
            node.block = node.children.block(start, min(start + block_size, node.total))
            node.block_start = start
        return node.block, k - node.block_start

    def child_vector(self, node: _Node, index: int) -> PolicyVector:
        return make_child(node.vector, decode_child(self.model, node.depth, index))

    def drain(self, node: _Node) -> None:
        """Evaluates the full-depth children of `node` until it is exhausted or pruned."""
        while node.alive and node.next_child < node.total:
            if self.time_up():
                self.out_of_budget = True
                return
            block, off = self.child_values(node, LAST_LEVEL_BLOCK)
            values = node.value + block[off:, 0]
            left = self.budget_left()
            if left is not None:
                if left <= 0:
                    self.out_of_budget = True
                    return
                values = values[:left]
            hits = np.flatnonzero(values > self.inc_value)
            if hits.size == 0:
                self.stats.evaluated_count += len(values)
                node.next_child += len(values)
            else:
                j = int(hits[0])
                index = node.next_child + j
                self.stats.evaluated_count += j + 1
                node.next_child = index + 1
                self.improve(float(values[j]), self.child_vector(node, index))
            if node.next_child >= node.total:
                self.kill(node)

    def expand_one(self, node: _Node) -> None:
        block, off = self.child_values(node, INNER_BLOCK)
        index = node.next_child
        node.next_child += 1
        self.stats.evaluated_count += 1
        value = node.value + float(block[off, 0])
        h = float(block[off, 1])
        if value + h > self.inc_value or not self.opt.prune:
            child = _Node(self.child_vector(node, index), node.depth + 1, value, h, self.opt.weight, next(self.seq))
            self.push(child)
        if node.next_child >= node.total:
            self.kill(node)

    # -- main loop -------------------------------------------------------

    def run(self) -> SearchResult:
        model, T = self.model, self.T
        root = _Node(PolicyVector.empty(model), 0, 0.0, 0.0, 1.0, -1)
        self.prepare(root)
        values = root.children.block(0, root.total)
        for index in range(root.total):
            left = self.budget_left()
            if left is not None and left <= 0:
                self.out_of_budget = True
                break
            self.stats.evaluated_count += 1
            value = float(values[index, 0])
            vector = self.child_vector(root, index)
            if T == 1:
                if value > self.inc_value:
                    self.improve(value, vector)
            else:
                h = float(values[index, 1])
                if value + h > self.inc_value or not self.opt.prune:
                    self.push(_Node(vector, 1, value, h, self.opt.weight, next(self.seq)))

        steps = 0
        while not self.out_of_budget:
            node = self.top()
            if node is None:
                break
            if not self.opt.prune and max(e[3].f for e in self.heap if e[3].alive) <= self.inc_value:
                break
            steps += 1
            if steps % TIME_CHECK_EVERY == 0 and self.time_up():
                self.out_of_budget = True
                break
            left = self.budget_left()
            if left is not None and left <= 0:
                self.out_of_budget = True
                break
            if node.children is None:
                self.prepare(node)
            if node.depth == T - 1:
                self.drain(node)
            else:
                self.expand_one(node)

        self.stats.wall_time = time.perf_counter() - self.t0
        return SearchResult(self.inc_vector, self.inc_value, self.stats, not self.out_of_budget)


def maa_star(model: DecPomdp, options: Options, table: HeuristicTable | None = None) -> SearchResult:
    """Optimal horizon-T joint policy by best-first search over policy vectors.

    Without a table, one of the requested kind is built first and its construction cost
    is reported in stats.subsearch_evaluated. With weight < 1 nodes are selected by
    V + weight * H, while pruning and termination still use V + H.
    """
    t0 = time.perf_counter()
    spent = 0
    if table is None:
        table = build_table(model, options.horizon, options.heuristic)
        spent = table.subsearch_evaluated
    if table.horizon < options.horizon - 1:
        raise ValueError(f"heuristic table covers {table.horizon} steps, search needs {options.horizon - 1}")
    result = _Search(model, options, table).run()
    result.stats.subsearch_evaluated = spent
    result.stats.wall_time = time.perf_counter() - t0
    return result


def anytime_run(model: DecPomdp, options: Options, table: HeuristicTable | None = None) -> SearchResult:
    """Weighted search; the incumbent trace is in result.stats.incumbent_trace."""
    if not 0.0 < options.weight < 1.0:
        raise ValueError("anytime search needs a weight strictly between 0 and 1")
    return maa_star(model, options, table)


@dataclass
class BruteForceResult:
    vector: PolicyVector
    value: float
    enumerated_count: int


def brute_force_count(model: DecPomdp, horizon: int) -> int:
    return math.prod(a ** level_offset(m, horizon) for a, m in zip(model.action_counts, model.observation_counts))


def brute_force(model: DecPomdp, horizon: int, cap: int = 10**8) -> BruteForceResult:
    """Evaluates every depth-`horizon` policy vector; first maximizer in enumeration order wins."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    count = brute_force_count(model, horizon)
    if count > cap:
        raise BudgetError(f"{count} policy vectors exceed the enumeration cap of {cap}")
    per_agent = [
        [PolicyTree(i, m, horizon, acts) for acts in all_trees(a, m, horizon)]
        for i, (a, m) in enumerate(zip(model.action_counts, model.observation_counts))
    ]
    best_value, best = -math.inf, None
    enumerated = 0
    for trees in itertools.product(*per_agent):
        vector = PolicyVector(trees)
        value = evaluate(model, vector)
        enumerated += 1
        if value > best_value:
            best_value, best = value, vector
    return BruteForceResult(best, best_value, enumerated)
