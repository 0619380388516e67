"""Online learning loops: EBF, the UCRL2 baseline, and diameter learning.

The environment draws Bernoulli rewards with the model's means; agents plan
with the known mean rewards.  Regret is always measured against mean rewards:
``regret_t = t * rho* - sum_{i <= t} r(s_i, a_i)``.
"""

from __future__ import annotations

import csv
import math
import warnings
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .confidence import (
    ConfidenceParams,
    EpisodeSnapshot,
    bad_event_flags,
    l1_radius,
    tuple_in_M,
)
from .errors import DiameterLearningError, InvalidInput
from .mdp import Mdp, optimal_gaps, solve_gain_bias
from .planners import PlanBudget, SolverSolution, extended_value_iteration, ebf_plan
from .trajectory import ArrivalTracker, TrajectoryStats


def make_rng(seed: int, label: str) -> np.random.Generator:
    """Independent stream per (seed, run label)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), zlib.crc32(label.encode())]))


class Environment:
    """Samples transitions and Bernoulli rewards from pre-drawn uniforms."""

    def __init__(self, mdp: Mdp, T: int, rng: np.random.Generator):
        self.mdp = mdp
        self.cdf = np.cumsum(mdp.P, axis=2).tolist()
        self.means = mdp.r.tolist()
        self.S = mdp.n_states
        self.u = rng.random((T, 2)).tolist()
        self.state = mdp.initial_state

    def step(self, t: int, a: int) -> tuple[float, int]:
        """Take action ``a`` at step ``t`` (0-based); returns (realized reward, next state)."""
        s = self.state
        u_next, u_rew = self.u[t]
        row = self.cdf[s][a]
        nxt = 0
        while nxt < self.S - 1 and u_next >= row[nxt]:
            nxt += 1
        reward = 1.0 if u_rew < self.means[s][a] else 0.0
        self.state = nxt
        return reward, nxt


def episode_bound(S: int, A: int, T: int) -> float:
    return S * A * (math.log2(T / (S * A)) + 1.0)


@dataclass
class EpisodeState:
    """Bookkeeping of the current doubling episode."""

    k: int
    t_start: int
    N: np.ndarray
    v: np.ndarray
    solution: object = None


def should_end_episode(state: EpisodeState, executed: tuple[int, int]) -> bool:
    s, a = executed
    return bool(state.v[s, a] >= max(state.N[s, a], 1))


@dataclass
class RegretTrace:
    """Per-step curves; ``cum_reward`` sums mean rewards of executed pairs."""

    cum_reward: np.ndarray
    regret: np.ndarray
    episode: np.ndarray

    def __len__(self) -> int:
        return len(self.regret)

    @property
    def final_regret(self) -> float:
        return float(self.regret[-1]) if len(self) else 0.0

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "cum_reward", "regret", "episode"])
            for t, (c, g, k) in enumerate(zip(self.cum_reward.tolist(), self.regret.tolist(),
                                              self.episode.tolist()), start=1):
                w.writerow([t, repr(c), repr(g), k])


@dataclass
class EpisodeRecord:
    k: int
    t_start: int
    rho: float
    certified: bool | None = None
    fallback: bool | None = None
    true_in_M: bool | None = None
    hstar_in_H: bool | None = None
    bad: tuple | None = None

    def to_json(self) -> dict:
        out = {"k": self.k, "t_start": self.t_start, "rho": self.rho}
        if self.certified is not None:
            out.update(certified=self.certified, fallback=self.fallback,
                       true_in_M=self.true_in_M, hstar_in_H=self.hstar_in_H,
                       bad_events=dict(zip(("b1", "b2", "b3", "b4"), self.bad)))
        return out


@dataclass
class Diagnostics:
    agent: str
    rho_star: float
    K: int = 0
    K_completed: int = 0
    episode_bound: float | None = None
    episodes: list = field(default_factory=list)
    H_hat: float | None = None

    @property
    def fallback_count(self) -> int:
        return sum(bool(e.fallback) for e in self.episodes)

    def bad_event_counts(self) -> dict | None:
        recs = [e.bad for e in self.episodes if e.bad is not None]
        if not recs:
            return None
        return {name: int(sum(b[i] for b in recs)) for i, name in enumerate(("b1", "b2", "b3", "b4"))}

    def to_json(self) -> dict:
        return {
            "agent": self.agent,
            "rho_star": self.rho_star,
            "K": self.K,
            "K_completed": self.K_completed,
            "episode_bound": self.episode_bound,
            "bad_event_counts": self.bad_event_counts(),
            "planner_fallback_count": self.fallback_count,
            "H_hat": self.H_hat,
            "episodes": [e.to_json() for e in self.episodes],
        }


def _run_episodic(mdp: Mdp, T: int, seed: int, label: str, plan, record):
    """Shared doubling-episode loop.

    ``plan(tracker, triple, reward_total, t)`` returns (policy, rho, extra);
    ``record(k, t_start, rho, extra, snapshot_fn)`` builds an EpisodeRecord.
    """
    S, A = mdp.n_states, mdp.n_actions
    gb = solve_gain_bias(mdp)
    env = Environment(mdp, T, make_rng(seed, label))
    means = mdp.r
    gaps = optimal_gaps(mdp, gb)
    diag = Diagnostics(label, gb.gain)
    ep_of_step = np.zeros(T, dtype=np.int64)
    mean_reward = np.zeros(T)

    triple = np.zeros((S, A, S), dtype=np.int64)
    tracker = ArrivalTracker(S, mdp.initial_state)
    reward_total = 0.0
    mean_sum = 0.0
    gap_sum = 0.0
    state = None
    s = mdp.initial_state
    t = 0
    ended_by_rule = False
    while t < T:
        N = triple.sum(axis=2)
        policy, rho, extra = plan(tracker, triple, reward_total, t)
        state = EpisodeState(diag.K + 1, t + 1, N, np.zeros((S, A), dtype=np.int64), extra)
        diag.K += 1

        def snapshot(N=N, triple=triple.copy(), total=reward_total, steps=t, ms=mean_sum, gs=gap_sum):
            stats = TrajectoryStats.from_counts(triple, total, steps)
            return EpisodeSnapshot(stats, tracker.summary(), steps, ms, gs)

        diag.episodes.append(record(diag.K, t + 1, rho, extra, snapshot, gb))
        policy = policy.tolist()
        ended_by_rule = False
        while t < T:
            a = policy[s]
            reward, s_next = env.step(t, a)
            triple[s, a, s_next] += 1
            state.v[s, a] += 1
            tracker.push(reward, s_next)
            reward_total += reward
            mean_reward[t] = means[s, a]
            mean_sum += means[s, a]
            gap_sum += gaps[s, a]
            ep_of_step[t] = diag.K
            t += 1
            done = should_end_episode(state, (s, a))
            s = s_next
            if done:
                ended_by_rule = True
                break
    diag.K_completed = diag.K if (ended_by_rule or diag.K == 0) else diag.K - 1
    if S * A >= 2 and T >= S * A:
        diag.episode_bound = episode_bound(S, A, T)
        assert diag.K_completed <= diag.episode_bound, (
            f"episode count {diag.K_completed} exceeds SA(log2(T/SA)+1) = {diag.episode_bound:.3f}")
    cum = np.cumsum(mean_reward)
    regret = np.arange(1, T + 1) * gb.gain - cum
    return RegretTrace(cum, regret, ep_of_step), diag


def run_ebf(mdp: Mdp, params: ConfidenceParams, T: int, seed: int, budget: PlanBudget = PlanBudget(),
            feas_tol: float = 1e-8, diagnostics: bool = True):
    """Run EBF for ``T`` steps; returns (RegretTrace, Diagnostics)."""
    if T < 0:
        raise InvalidInput("T must be non-negative")
    S, A = mdp.n_states, mdp.n_actions
    gb_true = solve_gain_bias(mdp)
    if params.H < gb_true.span:
        warnings.warn(f"H = {params.H} is below sp(h*) = {gb_true.span:.4g}; guarantees do not apply",
                      RuntimeWarning)

    def plan(tracker, triple, reward_total, t):
        stats = TrajectoryStats.from_counts(triple, reward_total, t)
        sol = ebf_plan(tracker.summary(), stats, params, mdp.r, budget, feas_tol)
        return sol.policy, sol.rho, sol

    def record(k, t_start, rho, sol: SolverSolution, snapshot, gb):
        rec = EpisodeRecord(k, t_start, float(rho), sol.certified, sol.fallback_used)
        if diagnostics:
            snap = snapshot()
            report = tuple_in_M(gb.policy, mdp.P, gb.bias, gb.gain, snap.stats, snap.summary, params,
                                mdp.r, feas_tol)
            bad = bad_event_flags(snap, mdp, gb, params, feas_tol, report=report)
            rec.true_in_M = report.certified
            rec.hstar_in_H = report.hset_ok
            rec.bad = (bad.b1, bad.b2, bad.b3, bad.b4)
        return rec

    return _run_episodic(mdp, T, seed, "ebf", plan, record)


def run_ucrl2(mdp: Mdp, delta: float, T: int, seed: int):
    """UCRL2 baseline with L1 radii; returns (RegretTrace, Diagnostics)."""
    if not 0 < delta < 1:
        raise InvalidInput(f"delta must lie in (0, 1), got {delta}")
    if T < 0:
        raise InvalidInput("T must be non-negative")
    S = mdp.n_states
    gamma = math.log(2.0 / delta)

    def plan(tracker, triple, reward_total, t):
        stats = TrajectoryStats.from_counts(triple, reward_total, t)
        evi = extended_value_iteration(stats.p_hat, l1_radius(stats.n_floor, S, gamma), mdp.r)
        return evi.policy, evi.gain, evi

    def record(k, t_start, rho, evi, snapshot, gb):
        return EpisodeRecord(k, t_start, float(rho))

    return _run_episodic(mdp, T, seed, "ucrl2", plan, record)


# ---------------------------------------------------------------------------
# diameter learning


@dataclass(frozen=True)
class LdResult:
    D_xy: float
    D_yx: float
    steps: tuple[int, int]
    arrivals: tuple[int, int]
    replans: tuple[int, int]


class _TargetProcess:
    """One of the two UCRL2-like learners: reach ``target``, restart from ``origin``."""

    def __init__(self, S: int, A: int, origin: int, target: int, radius_scale: float, policy: np.ndarray):
        self.S, self.A = S, A
        self.origin, self.target = origin, target
        self.radius_scale = radius_scale
        self.triple = np.zeros((S, A, S), dtype=np.int64)
        self.N_lu = None
        self.policy = policy
        self.steps = 0
        self.arrivals = 0
        self.replans = 0
        self.rewards = np.zeros((S, A))
        self.rewards[target] = 1.0

    def maybe_replan(self) -> None:
        N = self.triple.sum(axis=2)
        if self.N_lu is not None and not np.any(N >= np.maximum(2 * self.N_lu, 1)):
            return
        self.N_lu = N
        self.replans += 1
        n = np.maximum(N, 1)
        p_hat = np.where(N[..., None] > 0, self.triple / n[..., None], 1.0 / self.S)
        p_hat[self.target] = 0.0
        p_hat[self.target, :, self.origin] = 1.0
        radii = np.sqrt(self.radius_scale / n)
        radii[self.target] = 0.0
        evi = extended_value_iteration(p_hat, radii, self.rewards, max_iter=10**4, raise_on_cap=False)
        self.policy = evi.policy


def run_ld(mdp: Mdp, x: int, y: int, T0: int, delta0: float, seed: int) -> LdResult:
    """Learn the two travel times between ``x`` and ``y`` with two interleaved learners."""
    S, A = mdp.n_states, mdp.n_actions
    if not (0 <= x < S and 0 <= y < S):
        raise InvalidInput(f"states ({x}, {y}) out of range")
    if x == y:
        raise InvalidInput("x and y must differ")
    if T0 < 1:
        raise InvalidInput("T0 must be at least 1")
    if not 0 < delta0 < 1:
        raise InvalidInput(f"delta0 must lie in (0, 1), got {delta0}")
    rng = make_rng(seed, f"ld:{x}->{y}")
    scale = 14.0 * S * A * math.log(2.0 * A * T0 / delta0)
    to_y = _TargetProcess(S, A, x, y, scale, rng.integers(A, size=S))
    to_x = _TargetProcess(S, A, y, x, scale, rng.integers(A, size=S))
    env = Environment(mdp, T0, rng)
    s = mdp.initial_state
    proc = to_x if s != x else to_y
    for t in range(T0):
        proc.maybe_replan()
        a = int(proc.policy[s])
        _, s_next = env.step(t, a)
        proc.triple[s, a, s_next] += 1
        proc.steps += 1
        s = s_next
        if s == proc.target:
            proc.arrivals += 1
            proc = to_x if proc is to_y else to_y

    def ratio(p: _TargetProcess, name: str) -> float:
        if p.arrivals == 0:
            warnings.warn(f"target {p.target} never reached for {name}; returning inf", RuntimeWarning)
            return math.inf
        return p.steps / p.arrivals

    return LdResult(
        ratio(to_y, f"D_{x}{y}"), ratio(to_x, f"D_{y}{x}"),
        (to_y.steps, to_x.steps), (to_y.arrivals, to_x.arrivals), (to_y.replans, to_x.replans),
    )


def learn_diameter(mdp: Mdp, x: int, y: int, T0: int, delta0: float, seed: int) -> tuple[float, float]:
    res = run_ld(mdp, x, y, T0, delta0, seed)
    return res.D_xy, res.D_yx


def fourth_root_ceil(T: int) -> int:
    """Smallest integer m with m**4 >= T."""
    if T < 1:
        raise InvalidInput("T must be at least 1")
    m = math.isqrt(math.isqrt(T))
    while m ** 4 < T:
        m += 1
    return m


def estimate_H(mdp: Mdp, T: int, delta: float, seed: int) -> float:
    """Bias-span upper estimate: largest learned travel time plus one."""
    S = mdp.n_states
    if S < 2:
        raise InvalidInput("estimate_H needs at least 2 states")
    T0 = fourth_root_ceil(T)
    best = -math.inf
    for x in range(S):
        for y in range(S):
            if x == y:
                continue
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                d_xy, d_yx = learn_diameter(mdp, x, y, T0, delta, seed)
            if not (math.isfinite(d_xy) and math.isfinite(d_yx)):
                raise DiameterLearningError("diameter learning failed; increase T")
            best = max(best, d_xy, d_yx)
    return best + 1.0
