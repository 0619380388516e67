"""Statistical and deterministic checks of the concentration machinery.

Every check records its threshold and where the threshold comes from:
``"derived"`` for values computed from a formula, ``"exact"`` for exact
oracle values, and ``"reported"`` for constants quoted as published.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .agents import make_rng
from .confidence import bernstein_elementwise_radius, bias_weighted_radius, l1_radius
from .envs import make_garnet
from .errors import ConfigError, InvalidInput
from .mdp import flatten, solve_gain_bias, variance_rows
from .trajectory import Trajectory, arrival_segments

Z95 = 1.959963984540054


def wilson_interval(successes: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials == 0:
        return 0.0, 1.0
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    return max(centre - half, 0.0), min(centre + half, 1.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    threshold_source: str
    comparison: str = "<="
    trials: int | None = None
    ci: tuple[float, float] | None = None
    detail: dict = field(default_factory=dict)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        ci = "" if self.ci is None else f" CI95=[{self.ci[0]:.4f}, {self.ci[1]:.4f}]"
        return (f"{status} {self.name}: {self.value:.6g} {self.comparison} {self.threshold:.6g} "
                f"({self.threshold_source}){ci}")


def _frequency_check(name, failures, trials, threshold, source, **detail) -> CheckResult:
    freq = failures / trials
    return CheckResult(name, freq <= threshold, freq, threshold, source, "<=", trials,
                       wilson_interval(failures, trials), detail)


@dataclass
class ValidationReport:
    suite: str
    checks: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def extend(self, other: "ValidationReport") -> None:
        self.checks.extend(other.checks)

    def lines(self) -> list[str]:
        return [c.line() for c in self.checks]

    def to_json(self) -> dict:
        return {"suite": self.suite, "passed": self.passed, "checks": [asdict(c) for c in self.checks]}

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# multinomial counterexample


@dataclass(frozen=True)
class CounterexampleResult:
    mean: float
    std_error: float
    claimed_bound: float


def claimed_expectation_bound(n: int) -> float:
    """The expectation bound implied by the refuted inequality with D = 2, rho = 1/n."""
    return 2.0 * math.sqrt(2.0 * math.log(n) / n) + 2.0 / n


def counterexample_lower_bound(S: int, n: int) -> float:
    return (1.0 - 1.0 / S) ** n


def exact_expected_z(S: int, n: int) -> float:
    """E[sum_i |p_hat_i - 1/S|] for n uniform draws over S categories, via the binomial marginal."""
    p = 1.0 / S
    total = 0.0
    for k in range(n + 1):
        log_pmf = (math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)
                   + k * math.log(p) + (n - k) * math.log1p(-p))
        total += math.exp(log_pmf) * abs(k / n - p)
    return S * total


def counterexample_mc(S: int, n: int, trials: int, seed: int) -> CounterexampleResult:
    """Monte-Carlo mean and standard error of Z = sum_i |p_hat_i - 1/S|."""
    if S < 2 or n < 1 or trials < 1:
        raise InvalidInput("need S >= 2, n >= 1 and trials >= 1")
    rng = make_rng(seed, "counterexample")
    z = np.empty(trials)
    for i in range(trials):
        counts = np.bincount(rng.integers(S, size=n), minlength=S)
        z[i] = np.abs(counts / n - 1.0 / S).sum()
    se = float(z.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.nan
    return CounterexampleResult(float(z.mean()), se, claimed_expectation_bound(n))


def counterexample_suite(seed: int = 0, S: int = 5000, n: int = 50, trials: int = 2000) -> ValidationReport:
    res = counterexample_mc(S, n, trials, seed)
    exact = exact_expected_z(S, n)
    rep = ValidationReport("counterexample")
    dev = abs(res.mean - exact) / res.std_error
    rep.checks.append(CheckResult("counterexample mean vs exact (in standard errors)", dev <= 3.0, dev, 3.0,
                                  "exact", "<=", trials, None, {"mean": res.mean, "exact": exact,
                                                               "std_error": res.std_error}))
    rep.checks.append(CheckResult("counterexample mean floor", res.mean >= 1.9, res.mean, 1.9, "derived", ">=",
                                  trials))
    rep.checks.append(CheckResult("counterexample mean exceeds claimed bound", res.mean > res.claimed_bound,
                                  res.mean, res.claimed_bound, "derived", ">", trials))
    lb = counterexample_lower_bound(S, n)
    rep.checks.append(CheckResult("counterexample mean exceeds lower bound", res.mean > lb, res.mean, lb,
                                  "reported", ">", trials))
    return rep


# ---------------------------------------------------------------------------
# doubling sums


def doubling_sum(x, alpha: float) -> tuple[float, float]:
    """(LHS, RHS) of the doubling-sum inequality for an admissible sequence."""
    x = np.asarray(x, dtype=float)
    if not 0 < alpha <= 1:
        raise InvalidInput(f"alpha must lie in (0, 1], got {alpha}")
    if x.ndim != 1 or len(x) == 0 or x[0] != 1.0:
        raise InvalidInput("sequence must start with x_1 = 1")
    prev = np.cumsum(x)[:-1]
    if np.any(x <= 0) or np.any(x[1:] > prev):
        raise InvalidInput("sequence must be positive with x_n <= x_1 + ... + x_{n-1}")
    lhs = x[0] + float(np.sum(x[1:] * prev ** (-alpha)))
    total = float(x.sum())
    if alpha < 1:
        rhs = 2.0 ** alpha / (1.0 - alpha) * total ** (1.0 - alpha)
    else:
        rhs = 1.0 + 2.0 * math.log(total)
    return lhs, rhs


def check_doubling_sums(sequences, alpha: float, rel_tol: float = 1e-12) -> ValidationReport:
    rep = ValidationReport("doubling")
    worst = math.inf
    failures = 0
    for x in sequences:
        lhs, rhs = doubling_sum(x, alpha)
        worst = min(worst, rhs - lhs)
        failures += lhs > rhs * (1.0 + rel_tol)
    n = len(sequences)
    rep.checks.append(CheckResult(f"doubling sums alpha={alpha}", failures == 0, float(failures), 0.0, "derived",
                                  "<=", n, None, {"min_slack": worst}))
    return rep


def random_doubling_sequences(count: int, rng: np.random.Generator, max_len: int = 60) -> list[np.ndarray]:
    out = []
    for _ in range(count):
        length = int(rng.integers(1, max_len + 1))
        x = [1.0]
        total = 1.0
        for _ in range(length - 1):
            # keep a positive lower end so no term underflows to zero
            v = total * float(rng.uniform(1e-6, 1.0))
            x.append(v)
            total += v
        out.append(np.array(x))
    return out


def doubling_suite(seed: int = 0, count: int = 1000) -> ValidationReport:
    rng = make_rng(seed, "doubling")
    seqs = random_doubling_sequences(count, rng)
    rep = ValidationReport("doubling")
    for alpha in (0.25, 0.5, 0.75, 1.0):
        rep.extend(check_doubling_sums(seqs, alpha))
    return rep


# ---------------------------------------------------------------------------
# coverage of the transition confidence radii


def coverage_suite(seed: int = 0, delta: float = 0.1, trials: int = 10_000,
                   ns=(10, 100, 1000), threshold: float = 0.11) -> ValidationReport:
    gamma = math.log(2.0 / delta)
    rep = ValidationReport("coverage")
    for p in (0.05, 0.3, 0.7):
        for n in ns:
            rng = make_rng(seed, f"coverage:elementwise:{p}:{n}")
            p_hat = rng.binomial(n, p, size=trials) / n
            fails = int(np.sum(np.abs(p_hat - p) > bernstein_elementwise_radius(p_hat, n, gamma)))
            rep.checks.append(_frequency_check(f"elementwise radius p={p} n={n}", fails, trials, threshold,
                                               "derived", delta=delta))
    q = np.array([0.1, 0.2, 0.3, 0.4])
    h = np.array([0.0, 0.5, 1.0, 2.0])
    H = 2.0
    for n in ns:
        rng = make_rng(seed, f"coverage:l1:{n}")
        p_hat = rng.multinomial(n, q, size=trials) / n
        fails = int(np.sum(np.abs(p_hat - q).sum(axis=1) > l1_radius(n, len(q), gamma)))
        rep.checks.append(_frequency_check(f"l1 radius S=4 n={n}", fails, trials, threshold, "derived",
                                           delta=delta))
    for n in ns:
        rng = make_rng(seed, f"coverage:bias:{n}")
        p_hat = rng.multinomial(n, q, size=trials) / n
        rad = bias_weighted_radius(variance_rows(p_hat, h), n, H, gamma)
        fails = int(np.sum(np.abs((p_hat - q) @ h) > rad))
        rep.checks.append(_frequency_check(f"bias-weighted radius S=4 n={n}", fails, trials, threshold,
                                           "derived", delta=delta))
    return rep


# ---------------------------------------------------------------------------
# bias-difference concentration on a flat MDP


def flat_test_mdp(seed: int = 0):
    """Flattened 3-state, 2-action Garnet instance and its gain/bias."""
    base = make_garnet(3, 2, 3, seed)
    flat = flatten(base, solve_gain_bias(base))
    return flat, solve_gain_bias(flat)


def simulate_random_policy(mdp, N: int, runs: int, rng: np.random.Generator):
    """Batch of uniformly random-policy trajectories; rewards are the mean rewards."""
    S, A = mdp.n_states, mdp.n_actions
    cdf = np.cumsum(mdp.P, axis=2)
    states = np.empty((runs, N + 1), dtype=np.int64)
    actions = rng.integers(A, size=(runs, N))
    u = rng.random((runs, N))
    states[:, 0] = mdp.initial_state
    for t in range(N):
        rows = cdf[states[:, t], actions[:, t]]
        states[:, t + 1] = np.minimum((u[:, t, None] >= rows).sum(axis=1), S - 1)
    rewards = mdp.r[states[:, :-1], actions]
    return states, actions, rewards


def max_segment_deviation(traj: Trajectory, h, rho: float, s: int, s_next: int) -> float:
    """max over c of |sum_{k <= c} (h[s'] - h[s] + sum over segment k of (r - rho))|; 0 when c = 0."""
    seg = arrival_segments(traj, s, s_next)
    if seg.count == 0:
        return 0.0
    prefix = np.concatenate([[0.0], np.cumsum(traj.rewards - rho)])
    starts = np.asarray(seg.starts[: seg.count])
    ends = np.asarray(seg.ends[: seg.count])
    terms = h[s_next] - h[s] + prefix[ends - 1] - prefix[starts - 1]
    return float(np.max(np.abs(np.cumsum(terms))))


def lemma1_suite(seed: int = 0, N: int = 200, delta: float = 0.01, runs: int = 2000) -> ValidationReport:
    flat, gb = flat_test_mdp(seed)
    gamma = math.log(2.0 / delta)
    bound = (math.sqrt(2.0 * N * gamma) + 1.0) * gb.span
    states, actions, rewards = simulate_random_policy(flat, N, runs, make_rng(seed, "lemma1"))
    S = flat.n_states
    fails = np.zeros((S, S), dtype=np.int64)
    worst = 0.0
    for i in range(runs):
        traj = Trajectory(states[i], actions[i], rewards[i])
        for s in range(S):
            for s2 in range(S):
                if s != s2:
                    dev = max_segment_deviation(traj, gb.bias, gb.gain, s, s2)
                    worst = max(worst, dev / bound)
                    fails[s, s2] += dev > bound
    sigma = math.sqrt(delta * (1 - delta) / runs)
    threshold = N * delta + 3.0 * sigma
    rep = ValidationReport("lemma1")
    for s in range(S):
        for s2 in range(S):
            if s != s2:
                rep.checks.append(_frequency_check(f"segment bound pair ({s},{s2})", int(fails[s, s2]), runs,
                                                   threshold, "derived", bound=bound, worst_ratio=worst))
    return rep


def lemmaB5_suite(seed: int = 0, N: int = 200, delta: float = 0.01, runs: int = 2000,
                  checkpoints=(10, 50, 100, 200)) -> ValidationReport:
    flat, gb = flat_test_mdp(seed)
    gamma = math.log(2.0 / delta)
    _, _, rewards = simulate_random_policy(flat, N, runs, make_rng(seed, "lemmaB5"))
    partial = np.cumsum(rewards - gb.gain, axis=1)
    sigma = math.sqrt(delta * (1 - delta) / runs)
    rep = ValidationReport("lemmaB5")
    for n in checkpoints:
        bound = (2.0 * math.sqrt(n * gamma) + 1.0) * gb.span
        fails = int(np.sum(np.abs(partial[:, n - 1]) > bound))
        rep.checks.append(_frequency_check(f"centred reward sum n={n}", fails, runs, delta + 3.0 * sigma,
                                           "derived", bound=bound))
    return rep


SUITES = {
    "lemma1": lemma1_suite,
    "lemmaB5": lemmaB5_suite,
    "coverage": coverage_suite,
    "counterexample": counterexample_suite,
    "doubling": doubling_suite,
}


def validate(suite: str, seed: int = 0) -> ValidationReport:
    if suite == "all":
        rep = ValidationReport("all")
        for name in SUITES:
            rep.extend(SUITES[name](seed))
        return rep
    if suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}; choose from {sorted(SUITES) + ['all']}")
    return SUITES[suite](seed)
