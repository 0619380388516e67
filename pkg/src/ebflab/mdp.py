"""Exact computations on fully known tabular MDPs.

Everything here is a ground-truth oracle for the learning code: optimal gain
and bias by relative value iteration, the diameter by hitting-time dynamic
programming, optimal gaps, and the flattening reward shift.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConvergenceError, InvalidInput

ROW_SUM_TOL = 1e-12
# Aperiodicity transform weight: P -> tau * P + (1 - tau) * I keeps the gain
# and scales the bias by 1 / tau, so value iteration converges on periodic chains.
APERIODICITY_TAU = 0.5
TIE_ATOL = 1e-9


@dataclass(frozen=True)
class Mdp:
    """Tabular MDP with known mean rewards.

    ``P`` has shape (S, A, S) and ``r`` shape (S, A).  ``unconstrained_rewards``
    marks models whose rewards may leave [0, 1] (the output of :func:`flatten`).
    """

    P: np.ndarray
    r: np.ndarray
    initial_state: int = 0
    unconstrained_rewards: bool = False

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        r = np.array(self.r, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidInput(f"P must have shape (S, A, S), got {P.shape}")
        if r.shape != P.shape[:2]:
            raise InvalidInput(f"r must have shape {P.shape[:2]}, got {r.shape}")
        if np.any(P < 0):
            raise InvalidInput("transition rows contain negative entries")
        worst = np.max(np.abs(P.sum(axis=2) - 1.0))
        if worst > ROW_SUM_TOL:
            raise InvalidInput(f"transition rows must sum to 1 (worst deviation {worst:.3g})")
        if not np.all(np.isfinite(r)):
            raise InvalidInput("rewards must be finite")
        if not self.unconstrained_rewards and (np.any(r < 0) or np.any(r > 1)):
            raise InvalidInput("mean rewards must lie in [0, 1]")
        if not 0 <= int(self.initial_state) < P.shape[0]:
            raise InvalidInput(f"initial_state {self.initial_state} out of range")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "initial_state", int(self.initial_state))

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def to_json(self) -> dict:
        return {
            "S": self.n_states,
            "A": self.n_actions,
            "P": self.P.tolist(),
            "r": self.r.tolist(),
            "s0": self.initial_state,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Mdp":
        try:
            S, A = int(obj["S"]), int(obj["A"])
            mdp = cls(np.asarray(obj["P"], dtype=float), np.asarray(obj["r"], dtype=float),
                      int(obj.get("s0", 0)))
        except KeyError as exc:
            raise InvalidInput(f"missing MDP field {exc}") from None
        if (mdp.n_states, mdp.n_actions) != (S, A):
            raise InvalidInput(f"declared shape ({S}, {A}) does not match arrays")
        return mdp


def load_mdp(path: str | Path) -> Mdp:
    with open(path) as fh:
        return Mdp.from_json(json.load(fh))


def save_mdp(mdp: Mdp, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(mdp.to_json(), fh)


@dataclass(frozen=True)
class GainBias:
    gain: float
    bias: np.ndarray
    span: float
    residual: float
    policy: np.ndarray = field(repr=False)


def span(v) -> float:
    v = np.asarray(v, dtype=float)
    if v.size == 0:
        raise InvalidInput("span of an empty vector")
    return float(v.max() - v.min())


def greedy_policy(mdp: Mdp, h: np.ndarray) -> np.ndarray:
    """Greedy actions w.r.t. ``h``; ties go to the lowest action index."""
    q = mdp.r + mdp.P @ h
    return first_argmax(q)


def first_argmax(q: np.ndarray) -> np.ndarray:
    """Row-wise argmax of a 2-D array that resolves near-ties to the lowest index."""
    best = q.max(axis=1, keepdims=True)
    return np.argmax(q >= best - TIE_ATOL * (1.0 + np.abs(best)), axis=1)


def bellman_residual(mdp: Mdp, gain: float, bias: np.ndarray) -> float:
    q = mdp.r + mdp.P @ bias
    return float(np.max(np.abs(q.max(axis=1) - bias - gain)))


def solve_gain_bias(mdp: Mdp, tol: float = 1e-10, max_iter: int = 10**6) -> GainBias:
    """Optimal gain and bias (min-normalized) by relative value iteration.

    Iterates the aperiodicity-transformed Bellman operator anchored at state 0
    and stops once ``span(V_{n+1} - V_n) < tol``.
    """
    tau = APERIODICITY_TAU
    P, r = mdp.P, mdp.r
    v = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        tv = (r + tau * (P @ v)).max(axis=1) + (1 - tau) * v
        diff = tv - v
        if diff.max() - diff.min() < tol:
            break
        v = tv - tv[0]
    else:
        raise ConvergenceError(
            "relative value iteration did not converge: possibly not weak-communicating or tol too tight")
    gain = 0.5 * (diff.max() + diff.min())
    bias = tau * v
    bias = bias - bias.min()
    return GainBias(
        gain=float(gain),
        bias=bias,
        span=span(bias),
        residual=bellman_residual(mdp, gain, bias),
        policy=greedy_policy(mdp, bias),
    )


def _reachable(P: np.ndarray) -> np.ndarray:
    """Boolean (S, S) matrix: j reachable from i under some policy."""
    adj = P.max(axis=1) > 0
    reach = adj | np.eye(len(P), dtype=bool)
    while True:
        nxt = reach | ((reach.astype(int) @ adj.astype(int)) > 0)
        if (nxt == reach).all():
            return reach
        reach = nxt


def hitting_times(mdp: Mdp, target: int, tol: float = 1e-10, max_iter: int = 10**6) -> np.ndarray:
    """Minimal expected number of steps to reach ``target`` from every state."""
    S = mdp.n_states
    if not _reachable(mdp.P)[:, target].all():
        raise ConvergenceError("diameter infinite or tol too tight: target unreachable")
    P = mdp.P
    others = np.arange(S) != target
    t = np.zeros(S)
    for _ in range(max_iter):
        new = 1.0 + (P @ t).min(axis=1)
        new[target] = 0.0
        if np.max(np.abs(new - t)) < tol:
            t = new
            break
        t = new
    else:
        raise ConvergenceError("diameter infinite or tol too tight")
    # polish with an exact evaluation of the greedy policy
    pol = first_argmax(-(P @ t))
    Pp = P[np.arange(S), pol][np.ix_(others, others)]
    try:
        exact = np.linalg.solve(np.eye(S - 1) - Pp, np.ones(S - 1))
    except np.linalg.LinAlgError:
        return t
    cand = np.zeros(S)
    cand[others] = exact
    check = 1.0 + (P @ cand).min(axis=1)
    check[target] = 0.0
    if np.all(np.isfinite(cand)) and np.max(np.abs(check - cand)) <= max(tol, 1e-9 * cand.max()):
        return cand
    return t


def diameter(mdp: Mdp, tol: float = 1e-10) -> float:
    """Max over ordered pairs of the minimal expected travel time; 0 when S = 1."""
    S = mdp.n_states
    if S == 1:
        return 0.0
    return float(max(hitting_times(mdp, j, tol).max() for j in range(S)))


def optimal_gaps(mdp: Mdp, gb: GainBias) -> np.ndarray:
    """Matrix of one-step regrets ``h_s + rho - P_sa . h - r_sa``."""
    return gb.bias[:, None] + gb.gain - mdp.P @ gb.bias - mdp.r


def optimal_gap(mdp: Mdp, gb: GainBias, s: int, a: int) -> float:
    if not (0 <= s < mdp.n_states and 0 <= a < mdp.n_actions):
        raise InvalidInput(f"(s, a) = ({s}, {a}) out of range")
    return float(gb.bias[s] + gb.gain - mdp.P[s, a] @ gb.bias - mdp.r[s, a])


def flatten(mdp: Mdp, gb: GainBias) -> Mdp:
    """Shift rewards by the optimal gaps so that every action becomes optimal."""
    r_flat = gb.bias[:, None] + gb.gain - mdp.P @ gb.bias
    return Mdp(mdp.P, r_flat, mdp.initial_state, unconstrained_rewards=True)


def variance_weighted(x, h) -> float:
    """Variance of ``h`` under the distribution ``x``."""
    x = np.asarray(x, dtype=float)
    h = np.asarray(h, dtype=float)
    if x.shape != h.shape:
        raise InvalidInput(f"length mismatch: {x.shape} vs {h.shape}")
    # centering first keeps the result shift-invariant in floating point
    c = h - x @ h
    return float(max(x @ (c * c), 0.0))


def variance_rows(p: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Row-wise :func:`variance_weighted` for a stack of distributions."""
    if h.ndim > 1:
        h = np.broadcast_to(h, np.broadcast_shapes(h.shape, p.shape))
        p = np.broadcast_to(p, h.shape)
    mean = np.einsum("...i,...i->...", p, h) if h.ndim > 1 else p @ h
    c = h - mean[..., None]
    return np.maximum(np.einsum("...i,...i->...", p, c * c), 0.0)
