"""Shared fixtures for the test suite: random small models and exhaustive tables."""
from __future__ import annotations

import functools
import itertools

import numpy as np

from maastar.evaluation import evaluate
from maastar.model import DecPomdp
from maastar.policy import PolicyTree, PolicyVector, all_trees, level_offset


def _rows(rng: np.random.Generator, shape, width: int, sparse: bool) -> np.ndarray:
    out = rng.random(tuple(shape) + (width,))
    if sparse:
        out[rng.random(out.shape) < 0.4] = 0.0
    # keep at least one positive cell per row
    empty = out.sum(axis=-1) == 0
    out[empty, rng.integers(0, width)] = 1.0
    return out / out.sum(axis=-1, keepdims=True)


def _skew(n: int) -> np.ndarray:
    w = 0.25 ** np.arange(n)
    return w / w.sum()


def random_model(seed: int, max_states: int = 3, max_actions: int = 2, max_obs: int = 2) -> DecPomdp:
    """Two-agent model with |S| <= 3, |A_i| <= 2, |O_i| <= 2 and rewards in [-5, 5]."""
    rng = np.random.default_rng(seed)
    # skewed toward the largest sizes so most instances have real structure
    S = max_states - int(rng.choice(max_states, p=_skew(max_states)))
    A = tuple(max_actions - int(rng.choice(max_actions, p=_skew(max_actions))) for _ in range(2))
    M = tuple(max_obs - int(rng.choice(max_obs, p=_skew(max_obs))) for _ in range(2))
    JA, JO = A[0] * A[1], M[0] * M[1]
    sparse = bool(rng.random() < 0.5)
    T = _rows(rng, (S, JA), S, sparse)
    O = _rows(rng, (S, JA), JO, sparse)
    R = rng.uniform(-5.0, 5.0, size=(S, JA))
    if rng.random() < 0.3:
        start = np.zeros(S)
        start[rng.integers(0, S)] = 1.0
    else:
        start = _rows(rng, (), S, False)
    return DecPomdp(
        tuple(f"s{i}" for i in range(S)),
        tuple(tuple(f"a{i}{k}" for k in range(A[i])) for i in range(2)),
        tuple(tuple(f"o{i}{k}" for k in range(M[i])) for i in range(2)),
        T, O, R, start, name=f"random-{seed}",
    )


def random_horizon(seed: int) -> int:
    return 1 + seed % 3


def all_vectors(model: DecPomdp, depth: int):
    per_agent = [
        [PolicyTree(i, m, depth, acts) for acts in all_trees(a, m, depth)]
        for i, (a, m) in enumerate(zip(model.action_counts, model.observation_counts))
    ]
    for trees in itertools.product(*per_agent):
        yield PolicyVector(trees)


@functools.lru_cache(maxsize=None)
def full_values(seed: int, depth: int) -> dict:
    """evaluate() of every depth-`depth` vector of random_model(seed)."""
    model = random_model(seed)
    return {v: evaluate(model, v) for v in all_vectors(model, depth)}


def point_mass_optimum(model: DecPomdp, state: int, depth: int) -> float:
    """Best depth-`depth` value from a point-mass start, by enumeration."""
    if depth == 0:
        return 0.0
    pm = model.with_start(model.point_mass(state))
    return max(evaluate(pm, v) for v in all_vectors(pm, depth))


def random_vector(model: DecPomdp, depth: int, rng: np.random.Generator) -> PolicyVector:
    trees = []
    for i, (a, m) in enumerate(zip(model.action_counts, model.observation_counts)):
        acts = rng.integers(0, a, size=level_offset(m, depth))
        trees.append(PolicyTree(i, m, depth, tuple(int(x) for x in acts)))
    return PolicyVector(tuple(trees))
