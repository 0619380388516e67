"""Confidence radii, bias-set membership and plausibility reports.

Radii take visit counts already floored at 1; a zero count is a caller bug.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidInput
from .mdp import GainBias, Mdp, variance_rows
from .trajectory import ArrivalSummary, Trajectory, TrajectoryStats, arrival_summary


@dataclass(frozen=True)
class ConfidenceParams:
    H: float
    delta: float
    T: int
    include_gamma_in_hset: bool = False

    def __post_init__(self):
        if not self.H > 0:
            raise InvalidInput(f"H must be positive, got {self.H}")
        if not 0 < self.delta < 1:
            raise InvalidInput(f"delta must lie in (0, 1), got {self.delta}")
        if self.T < 1:
            raise InvalidInput(f"T must be at least 1, got {self.T}")

    @property
    def gamma(self) -> float:
        return math.log(2.0 / self.delta)


def _counts(n):
    n = np.asarray(n, dtype=float)
    if np.any(n < 1):
        raise InvalidInput("visit counts must be floored at 1 before computing a radius")
    return n


def bernstein_elementwise_radius(p_hat, n, gamma):
    n = _counts(n)
    p_hat = np.asarray(p_hat, dtype=float)
    out = 2.0 * np.sqrt(p_hat * gamma / n) + 3.0 * gamma / n + 4.0 * gamma ** 0.75 / n ** 0.75
    return out if out.ndim else float(out)


def l1_radius(n, S: int, gamma):
    n = _counts(n)
    out = np.sqrt(14.0 * S * gamma / n)
    return out if out.ndim else float(out)


def bias_weighted_radius(V, n, H: float, gamma):
    n = _counts(n)
    V = np.asarray(V, dtype=float)
    out = 2.0 * np.sqrt(V * gamma / n) + 12.0 * H * gamma / n + 10.0 * H * gamma ** 0.75 / n ** 0.75
    return out if out.ndim else float(out)


def hset_coefficient(params: ConfidenceParams, n_states: int, n_actions: int) -> float:
    """Multiplier of sp(h) on the right-hand side of the bias-set inequality."""
    lead = 48.0 * n_states * math.sqrt(n_actions * params.T)
    if params.include_gamma_in_hset:
        lead *= math.sqrt(params.gamma)
    return lead + math.sqrt(2.0 * params.gamma * params.T) + 1.0


def _summary(traj, n_states: int) -> ArrivalSummary:
    if isinstance(traj, ArrivalSummary):
        return traj
    return arrival_summary(traj, n_states)


def hset_margin(h, traj, params: ConfidenceParams, n_actions: int) -> tuple[float, tuple[int, int] | None]:
    """Worst (RHS - |L1|) over ordered pairs, or the box violation if h leaves [0, H]."""
    h = np.asarray(h, dtype=float)
    S = len(h)
    box = min(float(h.min()), float(params.H - h.max()))
    if box < 0:
        return box, None
    if S == 1:
        return math.inf, None
    rhs = hset_coefficient(params, S, n_actions) * float(h.max() - h.min())
    margins = rhs - np.abs(_summary(traj, S).l1(h))
    np.fill_diagonal(margins, np.inf)
    idx = np.unravel_index(np.argmin(margins), margins.shape)
    return float(margins[idx]), (int(idx[0]), int(idx[1]))


def hset_contains(h, traj: Trajectory | ArrivalSummary, params: ConfidenceParams,
                  n_actions: int) -> tuple[bool, float]:
    h = np.asarray(h, dtype=float)
    if h.min() < 0 or h.max() > params.H:
        raise InvalidInput("h must lie in [0, H]^S")
    margin, _ = hset_margin(h, traj, params, n_actions)
    return margin >= 0, margin


def optimality_residual(policy, P_prime, h_prime, rho, rewards) -> float:
    P_prime = np.asarray(P_prime, dtype=float)
    h_prime = np.asarray(h_prime, dtype=float)
    rewards = np.asarray(rewards, dtype=float)
    policy = np.asarray(policy)
    S = len(h_prime)
    if P_prime.shape != (S, rewards.shape[1], S) or rewards.shape[0] != S or policy.shape != (S,):
        raise InvalidInput("shape mismatch between policy, transitions, bias and rewards")
    q = rewards + P_prime @ h_prime
    best = q.max(axis=1)
    chosen = q[np.arange(S), policy]
    return float(np.max(np.maximum(np.abs(best - h_prime - rho), best - chosen)))


@dataclass(frozen=True)
class ConstraintReport:
    """Worst margins (radius minus deviation) per constraint family."""

    elementwise_margin: float
    elementwise_where: tuple | None
    l1_margin: float
    l1_where: tuple | None
    bias_weighted_margin: float
    bias_weighted_where: tuple | None
    optimality_residual: float
    hset_margin: float
    hset_where: tuple | None
    feas_tol: float

    @property
    def elementwise_ok(self) -> bool:
        return self.elementwise_margin >= -self.feas_tol

    @property
    def l1_ok(self) -> bool:
        return self.l1_margin >= -self.feas_tol

    @property
    def bias_weighted_ok(self) -> bool:
        return self.bias_weighted_margin >= -self.feas_tol

    @property
    def optimality_ok(self) -> bool:
        return self.optimality_residual <= self.feas_tol

    @property
    def hset_ok(self) -> bool:
        return self.hset_margin >= -self.feas_tol

    @property
    def transitions_ok(self) -> bool:
        return self.elementwise_ok and self.l1_ok and self.bias_weighted_ok

    @property
    def certified(self) -> bool:
        return self.transitions_ok and self.optimality_ok and self.hset_ok

    def to_json(self) -> dict:
        out = asdict(self)
        for key in ("elementwise", "l1", "bias_weighted", "hset"):
            out[f"{key}_ok"] = getattr(self, f"{key}_ok")
        out["optimality_ok"] = self.optimality_ok
        out["certified"] = self.certified
        for key, val in out.items():
            if isinstance(val, float) and not math.isfinite(val):
                out[key] = None if math.isnan(val) else ("inf" if val > 0 else "-inf")
        return out


def _worst(margins: np.ndarray) -> tuple[float, tuple]:
    idx = np.unravel_index(np.argmin(margins), margins.shape)
    return float(margins[idx]), tuple(int(i) for i in idx)


def transition_margins(P_prime, h_prime, stats: TrajectoryStats, params: ConfidenceParams):
    """Margin arrays for the elementwise, L1 and bias-weighted transition constraints."""
    P_prime = np.asarray(P_prime, dtype=float)
    h_prime = np.asarray(h_prime, dtype=float)
    gamma = params.gamma
    n = stats.n_floor
    p_hat = stats.p_hat
    S = p_hat.shape[0]
    dev = P_prime - p_hat
    elem = bernstein_elementwise_radius(p_hat, n[..., None], gamma) - np.abs(dev)
    l1 = l1_radius(n, S, gamma) - np.abs(dev).sum(axis=2)
    bias = bias_weighted_radius(variance_rows(p_hat, h_prime), n, params.H, gamma) - np.abs(dev @ h_prime)
    return elem, l1, bias


def tuple_in_M(policy, P_prime, h_prime, rho, stats: TrajectoryStats, traj: Trajectory | ArrivalSummary,
               params: ConfidenceParams, rewards, feas_tol: float = 1e-8) -> ConstraintReport:
    """Evaluate every plausibility constraint on a candidate (policy, P', h', rho)."""
    elem, l1, bias = transition_margins(P_prime, h_prime, stats, params)
    em, ew = _worst(elem)
    lm, lw = _worst(l1)
    bm, bw = _worst(bias)
    hm, hw = hset_margin(h_prime, traj, params, np.asarray(P_prime).shape[1])
    return ConstraintReport(
        elementwise_margin=em, elementwise_where=ew,
        l1_margin=lm, l1_where=lw,
        bias_weighted_margin=bm, bias_weighted_where=bw,
        optimality_residual=optimality_residual(policy, P_prime, h_prime, rho, rewards),
        hset_margin=hm, hset_where=hw,
        feas_tol=feas_tol,
    )


@dataclass(frozen=True)
class EpisodeSnapshot:
    """What the bad-event diagnostics need to know at the start of an episode.

    ``mean_reward_sum`` and ``gap_sum`` accumulate over steps ``t < t_k``.
    """

    stats: TrajectoryStats
    summary: ArrivalSummary
    steps: int
    mean_reward_sum: float
    gap_sum: float


@dataclass(frozen=True)
class BadEvents:
    b1: bool
    b2: bool
    b3: bool
    b4: bool

    def any(self) -> bool:
        return self.b1 or self.b2 or self.b3 or self.b4


def bad_event_flags(snap: EpisodeSnapshot, mdp: Mdp, gb: GainBias, params: ConfidenceParams,
                    feas_tol: float = 1e-8, report: ConstraintReport | None = None) -> BadEvents:
    """Flags B1-B4 at an episode start; ``report`` may pass a precomputed true-tuple report."""
    gamma = params.gamma
    S, A = mdp.n_states, mdp.n_actions
    n = snap.stats.n_floor
    p_hat = snap.stats.p_hat
    h = gb.bias
    dev = (mdp.P - p_hat) @ h
    b1_rad = 2.0 * np.sqrt(variance_rows(mdp.P, h) * gamma / n) + 2.0 * gb.span * gamma / n
    b1 = bool(np.any(np.abs(dev) > b1_rad))
    b2 = bool(np.any(np.abs(p_hat - mdp.P) > bernstein_elementwise_radius(p_hat, n[..., None], gamma)))
    scale = params.H * S * math.sqrt(A * params.T * gamma)
    b3 = (abs(snap.steps * gb.gain - snap.mean_reward_sum) > 26.0 * scale) or (snap.gap_sum > 22.0 * scale)
    if report is None:
        report = tuple_in_M(gb.policy, mdp.P, h, gb.gain, snap.stats, snap.summary, params, mdp.r, feas_tol)
    return BadEvents(b1, b2, bool(b3), not report.certified)
