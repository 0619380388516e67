"""Benchmark environments."""

from __future__ import annotations

import numpy as np

from .errors import InvalidInput
from .mdp import Mdp, _reachable

LEFT, RIGHT = 0, 1


class GenerationError(RuntimeError):
    pass


def make_riverswim(n: int = 6) -> Mdp:
    """RiverSwim chain: LEFT drifts back deterministically, RIGHT swims upstream.

    LEFT earns 0.005 in the leftmost state; RIGHT earns 1.0 in the rightmost.
    RIGHT moves right w.p. 0.35, stays 0.6, slips left 0.05, with boundary
    mass folded into staying.
    """
    if n < 2:
        raise InvalidInput("RiverSwim needs at least 2 states")
    P = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for s in range(n):
        P[s, LEFT, max(s - 1, 0)] = 1.0
        P[s, RIGHT, min(s + 1, n - 1)] += 0.35
        P[s, RIGHT, s] += 0.6
        P[s, RIGHT, max(s - 1, 0)] += 0.05
    r[0, LEFT] = 0.005
    r[n - 1, RIGHT] = 1.0
    return Mdp(P, r, 0)


def make_garnet(S: int, A: int, b: int, seed: int, max_tries: int = 1000) -> Mdp:
    """Random MDP with ``b`` next states per row, resampled until communicating."""
    if not 1 <= b <= S:
        raise InvalidInput(f"branching must satisfy 1 <= b <= S, got b={b}, S={S}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        P = np.zeros((S, A, S))
        for s in range(S):
            for a in range(A):
                support = rng.choice(S, size=b, replace=False)
                w = rng.random(b) + 1e-12
                P[s, a, support] = w / w.sum()
        r = rng.random((S, A))
        if _reachable(P).all():
            return Mdp(P, r, 0)
    raise GenerationError(f"no communicating Garnet instance within {max_tries} draws")


def make_swap() -> Mdp:
    """Two states, one action, deterministic swap; rewards (1, 0)."""
    P = np.array([[[0.0, 1.0]], [[1.0, 0.0]]])
    return Mdp(P, np.array([[1.0], [0.0]]), 0)


def make_chain(n: int = 3) -> Mdp:
    """Deterministic chain with LEFT/RIGHT moves; the end-to-end distance is n - 1."""
    if n < 2:
        raise InvalidInput("a chain needs at least 2 states")
    P = np.zeros((n, 2, n))
    for s in range(n):
        P[s, LEFT, max(s - 1, 0)] = 1.0
        P[s, RIGHT, min(s + 1, n - 1)] = 1.0
    r = np.zeros((n, 2))
    r[n - 1, RIGHT] = 1.0
    return Mdp(P, r, 0)


def make_single_state(rewards) -> Mdp:
    rewards = np.asarray(rewards, dtype=float).reshape(1, -1)
    return Mdp(np.ones((1, rewards.shape[1], 1)), rewards, 0)


ENVIRONMENTS = {
    "riverswim": make_riverswim,
    "garnet": make_garnet,
    "swap": make_swap,
    "chain": make_chain,
    "single_state": make_single_state,
}
