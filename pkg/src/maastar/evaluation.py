"""Exact evaluation of policy vectors.

Two independent routes compute the same quantities:

* `evaluate` / `history_weights` walk joint observation histories depth first, carrying
  an unnormalized state weight vector and skipping branches of weight exactly zero.
* `forward_weights` propagates all histories of one level at once with array ops; the
  search uses it, the tests check it against the depth-first walk.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .model import DecPomdp
from .policy import PolicyTree, PolicyVector, history_from_rank, level_offset


def _strides(counts: Sequence[int]) -> list[int]:
    strides = [1] * len(counts)
    for i in range(len(counts) - 2, -1, -1):
        strides[i] = strides[i + 1] * counts[i + 1]
    return strides


def _walk(model: DecPomdp, delta: PolicyVector, leaf_level: int, on_leaf) -> None:
    """Depth-first walk over joint histories; on_leaf(ranks, weights) runs at every
    nonzero-probability history of length `leaf_level`."""
    trees = delta.trees
    n_obs = model.observation_counts
    a_strides = _strides(model.action_counts)
    joint_obs = model.joint_observations()
    T, O = model.transition, model.observation_fn
    offsets = [[level_offset(m, lvl) for lvl in range(leaf_level + 1)] for m in n_obs]

    def visit(w: np.ndarray, level: int, ranks: tuple[int, ...]) -> None:
        if level == leaf_level:
            on_leaf(ranks, w)
            return
        ja = 0
        for i, tree in enumerate(trees):
            ja += tree.actions[offsets[i][level] + ranks[i]] * a_strides[i]
        pred = w @ T[:, ja, :]
        if not pred.any():
            return
        branch = pred[:, None] * O[:, ja, :]
        mass = branch.sum(axis=0)
        for jo, obs in enumerate(joint_obs):
            if mass[jo] == 0.0:
                continue
            child = tuple(r * m + o for r, m, o in zip(ranks, n_obs, obs))
            visit(branch[:, jo], level + 1, child)

    visit(model.start, 0, (0,) * len(trees))


def evaluate(model: DecPomdp, delta: PolicyVector) -> float:
    """Expected total reward of executing `delta` from the start distribution."""
    t = delta.depth
    if t == 0:
        return 0.0
    R = model.reward
    total = 0.0
    trees = delta.trees
    n_obs = model.observation_counts
    a_strides = _strides(model.action_counts)
    joint_obs = model.joint_observations()
    T, O = model.transition, model.observation_fn
    offsets = [[level_offset(m, lvl) for lvl in range(t)] for m in n_obs]

    def visit(w, level, ranks):
        nonlocal total
        ja = 0
        for i, tree in enumerate(trees):
            ja += tree.actions[offsets[i][level] + ranks[i]] * a_strides[i]
        total += float(w @ R[:, ja])
        if level + 1 == t:
            return
        branch = (w @ T[:, ja, :])[:, None] * O[:, ja, :]
        mass = branch.sum(axis=0)
        for jo, obs in enumerate(joint_obs):
            if mass[jo] == 0.0:
                continue
            visit(branch[:, jo], level + 1, tuple(r * m + o for r, m, o in zip(ranks, n_obs, obs)))

    visit(model.start, 0, (0,) * len(trees))
    return total


def history_weights(model: DecPomdp, delta: PolicyVector) -> Iterator[tuple[tuple[int, ...], np.ndarray]]:
    """Yields (per-agent history ranks, unnormalized state weights) for every length-t joint
    history of nonzero probability, t = delta.depth. The weights sum to P(history)."""
    out: list[tuple[tuple[int, ...], np.ndarray]] = []
    _walk(model, delta, delta.depth, lambda ranks, w: out.append((ranks, w)))
    return iter(out)


def reachable_distribution(model: DecPomdp, delta: PolicyVector) -> np.ndarray:
    """State distribution after executing `delta`, marginalized over observation histories."""
    dist = np.zeros(model.n_states)
    for _, w in history_weights(model, delta):
        dist += w
    return dist


def forward_weights(model: DecPomdp, delta: PolicyVector) -> tuple[float, np.ndarray]:
    """Value of `delta` and the weight tensor W[h_1, ..., h_n, s] over all length-t histories.

    Histories are indexed per agent by lexicographic rank; zero-probability histories are
    kept (their rows are zero).
    """
    n = model.n_agents
    S = model.n_states
    a_strides = _strides(model.action_counts)
    n_obs = model.observation_counts
    W = model.start.reshape((1,) * n + (S,))
    value = 0.0
    for lvl in range(delta.depth):
        ja = np.zeros(W.shape[:n], dtype=np.intp)
        for i, tree in enumerate(delta.trees):
            acts = np.asarray(tree.level(lvl), dtype=np.intp) * a_strides[i]
            shape = [1] * n
            shape[i] = len(acts)
            ja = ja + acts.reshape(shape)
        value += float(np.sum(W * np.moveaxis(model.reward[:, ja], 0, -1)))
        Tj = np.moveaxis(model.transition[:, ja, :], 0, -2)
        pred = np.einsum("...s,...sk->...k", W, Tj)
        Oj = np.moveaxis(model.observation_fn[:, ja, :], 0, -2)
        nxt = (pred[..., None] * Oj).reshape(ja.shape + (S,) + tuple(n_obs))
        # interleave (h_1..h_n, s, o_1..o_n) -> (h_1, o_1, ..., h_n, o_n, s)
        order = []
        for i in range(n):
            order += [i, n + 1 + i]
        order.append(n)
        nxt = nxt.transpose(order)
        W = nxt.reshape(tuple(ja.shape[i] * n_obs[i] for i in range(n)) + (S,))
    return value, W


@dataclass(frozen=True)
class Completion:
    """Depth-(T - t) trees attached below every length-t history of each agent.

    trees[i][r] is the tree agent i follows after the history of lexicographic rank r.
    """

    horizon_remaining: int
    trees: tuple[tuple[PolicyTree, ...], ...]

    def __post_init__(self):
        for per_agent in self.trees:
            for tree in per_agent:
                if tree.depth != self.horizon_remaining:
                    raise ValueError(
                        f"completion tree of depth {tree.depth}, expected {self.horizon_remaining}"
                    )


def stitch(delta: PolicyVector, completion: Completion) -> PolicyVector:
    """Full vector whose first t levels are `delta` and whose subtrees come from `completion`."""
    t = delta.depth
    k = completion.horizon_remaining
    if len(completion.trees) != len(delta.trees):
        raise ValueError("completion covers a different number of agents")
    out = []
    for tree, attached in zip(delta.trees, completion.trees):
        m = tree.n_obs
        if len(attached) != m**t:
            raise ValueError(f"agent {tree.agent}: completion has {len(attached)} trees, needs {m**t}")
        acts = list(tree.actions)
        for lvl in range(k):
            for sub in attached:
                if sub.agent != tree.agent or sub.n_obs != m:
                    raise ValueError("completion tree belongs to a different agent")
                acts.extend(sub.level(lvl))
        out.append(PolicyTree(tree.agent, m, t + k, tuple(acts)))
    return PolicyVector(tuple(out))


def split(vector: PolicyVector, t: int) -> tuple[PolicyVector, Completion]:
    """Inverse of stitch: the depth-t prefix and the completion below it."""
    k = vector.depth - t
    trees = []
    for tree in vector.trees:
        hists = [history_from_rank(r, t, tree.n_obs) for r in range(tree.n_obs**t)]
        if k == 0:
            trees.append(tuple(PolicyTree(tree.agent, tree.n_obs, 0, ()) for _ in hists))
        else:
            trees.append(tuple(tree.subtree(h) for h in hists))
    return vector.prefix(t), Completion(k, tuple(trees))


def completion_value(model: DecPomdp, delta: PolicyVector, completion: Completion) -> float:
    """Value the completion adds on top of `delta`."""
    return evaluate(model, stitch(delta, completion)) - evaluate(model, delta)
