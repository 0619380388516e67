"""Optimistic planning over transition confidence sets.

``extended_value_iteration`` is the UCRL2-style planner over L1 balls.
``ebf_plan`` searches the bias-constrained plausible set: for each candidate
policy it alternates between choosing the most favourable transition rows
for the current bias and re-evaluating the bias under those rows, then keeps
the best tuple whose full constraint report certifies.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .confidence import (
    ConfidenceParams,
    ConstraintReport,
    bernstein_elementwise_radius,
    bias_weighted_radius,
    l1_radius,
    tuple_in_M,
)
from .errors import ConvergenceError, InvalidInput
from .mdp import APERIODICITY_TAU, first_argmax, variance_rows
from .trajectory import ArrivalSummary, TrajectoryStats

SINGULAR_COND = 1e12


def transfer_rows(p_hat, lo, hi, budget, h, cap=None):
    """Maximise ``q . h`` row-wise over the plausible rows around ``p_hat``.

    Feasible rows satisfy ``lo <= q <= hi``, ``sum(q) = 1``,
    ``|q - p_hat|_1 <= budget`` and, when ``cap`` is given,
    ``(q - p_hat) . h <= cap``.  All array arguments broadcast over leading
    dimensions; the last axis indexes next states.  ``p_hat`` must itself be
    feasible.

    Mass moves from the lowest-valued states to the highest-valued ones.  The
    objective is concave piecewise linear in the moved amount with kinks at
    the cumulative capacities, so it is evaluated at every kink.  A binding
    cap is met exactly by shrinking toward ``p_hat`` along the segment.
    """
    p_hat, lo, hi, h = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (p_hat, lo, hi, h)))
    shape = p_hat.shape
    S = shape[-1]
    p = p_hat.reshape(-1, S)
    hv = h.reshape(-1, S)
    B = p.shape[0]
    budget = np.broadcast_to(np.asarray(budget, dtype=float), shape[:-1]).reshape(B)

    desc = np.argsort(-hv, axis=1, kind="stable")
    asc = np.argsort(hv, axis=1, kind="stable")
    u = np.take_along_axis(hi.reshape(-1, S) - p, desc, axis=1).clip(min=0.0)
    l = np.take_along_axis(p - lo.reshape(-1, S), asc, axis=1).clip(min=0.0)
    h_desc = np.take_along_axis(hv, desc, axis=1)
    h_asc = np.take_along_axis(hv, asc, axis=1)
    cu, cl = np.cumsum(u, axis=1), np.cumsum(l, axis=1)
    cu_ex, cl_ex = cu - u, cl - l

    m_max = np.minimum(np.minimum(0.5 * budget, cu[:, -1]), cl[:, -1])
    cands = np.concatenate([np.zeros((B, 1)), cu, cl, m_max[:, None]], axis=1)
    cands = np.minimum(cands, m_max[:, None])
    recv = np.clip(cands[:, :, None] - cu_ex[:, None, :], 0.0, u[:, None, :])
    don = np.clip(cands[:, :, None] - cl_ex[:, None, :], 0.0, l[:, None, :])
    gain = (recv * h_desc[:, None, :]).sum(axis=2) - (don * h_asc[:, None, :]).sum(axis=2)
    best = np.argmax(gain, axis=1)
    rows = np.arange(B)

    delta = np.zeros((B, S))
    np.put_along_axis(delta, desc, recv[rows, best], axis=1)
    sub = np.zeros((B, S))
    np.put_along_axis(sub, asc, don[rows, best], axis=1)
    delta -= sub
    g = gain[rows, best]
    if cap is not None:
        cap = np.broadcast_to(np.asarray(cap, dtype=float), shape[:-1]).reshape(B)
        theta = np.where(g > cap, cap / np.where(g > 0, g, 1.0), 1.0)
        delta *= np.clip(theta, 0.0, 1.0)[:, None]
    q = np.maximum(p + delta, 0.0)
    return q.reshape(shape)


@dataclass(frozen=True)
class EviResult:
    policy: np.ndarray
    gain: float
    bias: np.ndarray
    P: np.ndarray
    iterations: int
    converged: bool


def extended_value_iteration(p_hat, radii, rewards, tol: float = 1e-7, max_iter: int = 10**5,
                             raise_on_cap: bool = True) -> EviResult:
    """Optimistic gain over L1 balls of the given radii around ``p_hat``.

    Runs on the aperiodicity-transformed extended MDP and stops when
    ``span(V_{n+1} - V_n) < tol``.  With ``raise_on_cap=False`` the last
    iterate is returned (flagged unconverged) instead of raising.
    """
    p_hat = np.asarray(p_hat, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    radii = np.asarray(radii, dtype=float)
    if np.any(radii < 0):
        raise InvalidInput("radii must be non-negative")
    S, A, _ = p_hat.shape
    tau = APERIODICITY_TAU
    v = np.zeros(S)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        P_opt = transfer_rows(p_hat, 0.0, 1.0, radii, v)
        q = rewards + tau * (P_opt @ v)
        tv = q.max(axis=1) + (1 - tau) * v
        diff = tv - v
        if diff.max() - diff.min() < tol:
            converged = True
            break
        v = tv - tv[0]
    if not converged and raise_on_cap:
        raise ConvergenceError("extended value iteration did not converge: extended MDP possibly "
                               "multichain; increase tol or check radii")
    bias = tau * v
    bias = bias - bias.min()
    return EviResult(
        policy=first_argmax(q),
        gain=float(0.5 * (diff.max() + diff.min())),
        bias=bias,
        P=P_opt,
        iterations=it,
        converged=converged,
    )


def _evaluate_batch(Pp: np.ndarray, rp: np.ndarray):
    """Solve ``h + rho = r + P h`` with ``h[0] = 0`` for a stack of chains.

    Returns (rho, h normalized to min 0, ok).  ``ok`` is False where the
    system is singular (several recurrent classes).
    """
    B, S, _ = Pp.shape
    M = np.empty((B, S, S))
    M[:, :, 0] = 1.0
    M[:, :, 1:] = (np.eye(S) - Pp)[:, :, 1:]
    cond = np.linalg.cond(M) if S > 1 else np.ones(B)
    ok = np.isfinite(cond) & (cond < SINGULAR_COND)
    M[~ok] = np.eye(S)
    x = np.linalg.solve(M, rp[..., None])[..., 0]
    rho = x[:, 0].copy()
    h = np.zeros((B, S))
    h[:, 1:] = x[:, 1:]
    h -= h.min(axis=1, keepdims=True)
    rho[~ok] = -np.inf
    return rho, h, ok


def inner_evaluate(policy, P_prime, rewards, max_iter: int = 10**5, tol: float = 1e-12):
    """Gain and min-normalized bias of a fixed policy under ``P_prime``."""
    policy = np.asarray(policy)
    P_prime = np.asarray(P_prime, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    S = len(policy)
    Pp = P_prime[np.arange(S), policy]
    rp = rewards[np.arange(S), policy]
    rho, h, ok = _evaluate_batch(Pp[None], rp[None])
    if ok[0]:
        return float(rho[0]), h[0]
    warnings.warn("policy chain is singular; falling back to damped iteration", RuntimeWarning)
    tau = APERIODICITY_TAU
    v = np.zeros(S)
    for _ in range(max_iter):
        tv = rp + tau * (Pp @ v) + (1 - tau) * v
        diff = tv - v
        if diff.max() - diff.min() < tol:
            break
        v = tv - tv[0]
    else:
        raise ConvergenceError("policy chain has several recurrent classes with distinct gains")
    bias = tau * v
    return float(0.5 * (diff.max() + diff.min())), bias - bias.min()


@dataclass(frozen=True)
class PlanBudget:
    policy_cap: int = 4096
    alternations: int = 50
    sweeps: int = 10
    rho_tol: float = 1e-9


@dataclass(frozen=True)
class SolverSolution:
    policy: np.ndarray
    P: np.ndarray
    h: np.ndarray
    rho: float
    report: ConstraintReport
    certified: bool
    fallback_used: bool

    def to_json(self) -> dict:
        return {
            "policy": [int(a) for a in self.policy],
            "rho": self.rho,
            "h": [float(x) for x in self.h],
            "certified": self.certified,
            "fallback_used": self.fallback_used,
            "report": self.report.to_json(),
        }


class _PlausibleSet:
    """Per-(s, a) constraint data shared by every candidate policy."""

    def __init__(self, stats: TrajectoryStats, params: ConfidenceParams):
        self.params = params
        self.gamma = params.gamma
        self.p_hat = stats.p_hat
        self.n = stats.n_floor.astype(float)
        S = self.p_hat.shape[0]
        rad = bernstein_elementwise_radius(self.p_hat, self.n[..., None], self.gamma)
        self.lo = np.maximum(self.p_hat - rad, 0.0)
        self.hi = np.minimum(self.p_hat + rad, 1.0)
        self.l1 = l1_radius(self.n, S, self.gamma)

    def cap(self, p_hat, n, h):
        return bias_weighted_radius(variance_rows(p_hat, h), n, self.params.H, self.gamma)

    def best_rows(self, s_idx, a_idx, h, maximize=True):
        """Most (or least) favourable rows for (s_idx, a_idx) under biases ``h``."""
        p, n = self.p_hat[s_idx, a_idx], self.n[s_idx, a_idx]
        sign = 1.0 if maximize else -1.0
        return transfer_rows(p, self.lo[s_idx, a_idx], self.hi[s_idx, a_idx], self.l1[s_idx, a_idx],
                             sign * h, self.cap(p, n, h))


def _alternate(policies: np.ndarray, h0: np.ndarray, plaus: _PlausibleSet, rewards: np.ndarray,
               budget: PlanBudget):
    """Run the row/bias alternation for a batch of policies.

    Returns (rho, h, P_full) with P_full of shape (B, S, A, S).
    """
    B, S = policies.shape
    A = rewards.shape[1]
    H = plaus.params.H
    s_idx = np.broadcast_to(np.arange(S), (B, S))
    rp = rewards[s_idx, policies]
    h = np.broadcast_to(np.minimum(h0, H), (B, S)).copy()
    rho_prev = np.full(B, -np.inf)
    for _ in range(budget.alternations):
        q = plaus.best_rows(s_idx, policies, h[:, None, :])
        rho, h_new, ok = _evaluate_batch(q, rp)
        with np.errstate(invalid="ignore"):
            stalled = np.abs(rho - rho_prev) < budget.rho_tol
        h_clipped = np.minimum(h_new, H)
        done = (~ok) | stalled
        rho_prev = rho
        if done.all():
            h = h_new
            break
        h = h_clipped
    else:
        # rows were chosen for the clipped bias; keep the exact evaluation of those rows
        h = h_new

    P_full = np.empty((B, S, A, S))
    hb = np.broadcast_to(h[:, None, None, :], (B, S, A, S))
    s_all = np.broadcast_to(np.arange(S)[None, :, None], (B, S, A))
    a_all = np.broadcast_to(np.arange(A)[None, None, :], (B, S, A))
    P_full[:] = plaus.best_rows(s_all, a_all, hb, maximize=False)
    P_full[np.arange(B)[:, None], np.arange(S)[None, :], policies] = q
    rho = np.where(ok, rho, -np.inf)
    return rho, h, P_full


def _all_policies(S: int, A: int) -> np.ndarray:
    return np.array(list(itertools.product(range(A), repeat=S)), dtype=np.int64).reshape(-1, S)


def _certify_best(policies, rho, h, P_full, stats, summary, params, rewards, feas_tol,
                  reference=None, tie_tol: float = 1e-9):
    """Best certified candidate, or None.

    Candidates are tried by decreasing gain.  Gains within ``tie_tol`` of the
    best remaining gain form a tie block, ordered by the number of states
    where the policy differs from ``reference`` and then lexicographically.
    """
    keys = [tuple(p) for p in policies.tolist()]
    if reference is None:
        dist = [0] * len(keys)
    else:
        dist = (policies != np.asarray(reference)[None, :]).sum(axis=1).tolist()
    remaining = sorted((i for i in range(len(keys)) if math.isfinite(rho[i])), key=lambda i: -rho[i])
    while remaining:
        top = rho[remaining[0]]
        block = [i for i in remaining if rho[i] >= top - tie_tol]
        remaining = remaining[len(block):]
        for i in sorted(block, key=lambda i: (dist[i], keys[i])):
            report = tuple_in_M(policies[i], P_full[i], h[i], rho[i], stats, summary, params, rewards,
                                feas_tol)
            if report.certified:
                return i, report
    return None


def ebf_plan(summary: ArrivalSummary, stats: TrajectoryStats, params: ConfidenceParams, rewards,
             budget: PlanBudget = PlanBudget(), feas_tol: float = 1e-8,
             evi: EviResult | None = None) -> SolverSolution:
    """Approximately maximise the gain over the bias-constrained plausible set."""
    rewards = np.asarray(rewards, dtype=float)
    S, A = rewards.shape
    if evi is None:
        evi = extended_value_iteration(stats.p_hat, l1_radius(stats.n_floor, S, params.gamma), rewards)
    plaus = _PlausibleSet(stats, params)
    h0 = evi.bias

    if A ** S <= budget.policy_cap:
        policies = _all_policies(S, A)
        rho, h, P_full = _alternate(policies, h0, plaus, rewards, budget)
        found = _certify_best(policies, rho, h, P_full, stats, summary, params, rewards, feas_tol,
                              evi.policy, budget.rho_tol)
        best = None if found is None else (policies[found[0]], P_full[found[0]], h[found[0]],
                                           float(rho[found[0]]), found[1])
    else:
        best = _coordinate_ascent(evi.policy, h0, plaus, stats, summary, params, rewards, budget, feas_tol)

    if best is None:
        report = tuple_in_M(evi.policy, evi.P, evi.bias, evi.gain, stats, summary, params, rewards, feas_tol)
        return SolverSolution(evi.policy, evi.P, evi.bias, evi.gain, report, False, True)
    policy, P, h_best, rho_best, report = best
    return SolverSolution(np.asarray(policy), P, h_best, rho_best, report, True, False)


def _neighbours(policy: np.ndarray, A: int) -> np.ndarray:
    out = []
    for s in range(len(policy)):
        for a in range(A):
            if a != policy[s]:
                cand = policy.copy()
                cand[s] = a
                out.append(cand)
    return np.array(out, dtype=np.int64)


def _coordinate_ascent(start, h0, plaus, stats, summary, params, rewards, budget, feas_tol):
    """Hill-climb over single-state action swaps, keeping only certified tuples."""
    A = rewards.shape[1]
    best = None
    batch = np.asarray(start, dtype=np.int64)[None]
    for sweep in range(budget.sweeps + 1):
        rho, h, P_full = _alternate(batch, h0, plaus, rewards, budget)
        found = _certify_best(batch, rho, h, P_full, stats, summary, params, rewards, feas_tol,
                              start, budget.rho_tol)
        if found is None:
            if best is None and sweep == 0:
                batch = _neighbours(batch[0], A)
                continue
            break
        i, report = found
        if best is not None and rho[i] <= best[3] + budget.rho_tol:
            break
        best = (batch[i].copy(), P_full[i], h[i], float(rho[i]), report)
        batch = _neighbours(best[0], A)
    return best
