"""Acceptance criteria; each test records one PASS/FAIL line shown in the terminal summary."""

import time

import numpy as np
import pytest

from conftest import brute_force_diameter, brute_force_gain, naive_l1, naive_segments
from ebflab.agents import episode_bound, learn_diameter, run_ebf, run_ucrl2
from ebflab.confidence import ConfidenceParams
from ebflab.envs import make_chain, make_garnet, make_riverswim, make_single_state, make_swap
from ebflab.experiment import ExperimentConfig, regret_slope, run_experiment
from ebflab.mdp import diameter, solve_gain_bias
from ebflab.trajectory import Trajectory, arrival_segments, l1_statistic
from ebflab.validation import (
    counterexample_lower_bound,
    counterexample_mc,
    coverage_suite,
    doubling_suite,
    exact_expected_z,
    lemma1_suite,
)

RESULTS = []

T_LONG = 10**5
SEEDS_OPT = range(20)
SEEDS_REGRET = range(10)
EXACT_Z_5000_50 = 1.980097687135606


def record(number, ok, text):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {text}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="session")
def riverswim_ebf():
    m = make_riverswim(6)
    gb = solve_gain_bias(m)
    params = ConfidenceParams(gb.span + 1.0, 0.05, T_LONG)
    start = time.perf_counter()
    runs = [run_ebf(m, params, T_LONG, seed) for seed in SEEDS_OPT]
    return m, gb, runs, time.perf_counter() - start


def test_criterion_01_exact_solver():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    worst_gap, worst_res = 0.0, 0.0
    for i in range(100):
        S, A = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        m = make_garnet(S, A, int(rng.integers(1, S + 1)), i)
        gb = solve_gain_bias(m)
        worst_gap = max(worst_gap, abs(gb.gain - brute_force_gain(m)))
        worst_res = max(worst_res, gb.residual)
    elapsed = time.perf_counter() - start
    record(1, worst_gap <= 1e-6 and worst_res <= 1e-9 and elapsed < 30,
           f"max gain error {worst_gap:.2e} <= 1e-6, max residual {worst_res:.2e} <= 1e-9, {elapsed:.1f}s < 30s")


def test_criterion_02_diameter():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    worst = 0.0
    for i in range(100):
        S, A = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        m = make_garnet(S, A, int(rng.integers(1, S + 1)), 1000 + i)
        worst = max(worst, abs(diameter(m) - brute_force_diameter(m)))
    elapsed = time.perf_counter() - start
    record(2, worst <= 1e-6 and elapsed < 30, f"max diameter error {worst:.2e} <= 1e-6, {elapsed:.1f}s < 30s")


def test_criterion_03_arrival_segments():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    mismatches = 0
    pairs = 0
    for _ in range(1000):
        S = int(rng.integers(2, 7))
        N = int(rng.integers(0, 501))
        # dyadic rewards, bias and centring keep every sum exact in floating point
        traj = Trajectory(rng.integers(S, size=N + 1), rng.integers(2, size=N), rng.integers(0, 9, size=N) / 8.0)
        h = rng.integers(0, 17, size=S) / 4.0
        rho = int(rng.integers(0, 9)) / 8.0
        states, rewards = traj.states.tolist(), traj.rewards.tolist()
        for s in range(S):
            for s2 in range(S):
                if s == s2:
                    continue
                pairs += 1
                seg = arrival_segments(traj, s, s2)
                starts, ends, count = naive_segments(states, s, s2)
                same = (list(seg.starts) == starts and list(seg.ends) == ends and seg.count == count
                        and l1_statistic(h, s, s2, traj, rho) == naive_l1(h, s, s2, states, rewards, rho))
                mismatches += not same
    elapsed = time.perf_counter() - start
    record(3, mismatches == 0 and elapsed < 60,
           f"{mismatches} mismatches over {pairs} ordered pairs, {elapsed:.1f}s < 60s")


def test_criterion_04_coverage():
    start = time.perf_counter()
    rep = coverage_suite(0)
    elapsed = time.perf_counter() - start
    worst = max(c.value for c in rep.checks)
    record(4, rep.passed and worst <= 0.11 and elapsed < 180,
           f"max violation frequency {worst:.4f} <= 0.11 over {len(rep.checks)} cells, {elapsed:.1f}s < 180s")


def test_criterion_05_segment_bound():
    start = time.perf_counter()
    rep = lemma1_suite(0, N=200, delta=0.01, runs=2000)
    elapsed = time.perf_counter() - start
    worst = max(c.value for c in rep.checks)
    threshold = rep.checks[0].threshold
    record(5, rep.passed and elapsed < 180,
           f"max pair failure frequency {worst:.4f} <= {threshold:.4f}, {elapsed:.1f}s < 180s")


def test_criterion_06_counterexample():
    start = time.perf_counter()
    res = counterexample_mc(5000, 50, 2000, 0)
    elapsed = time.perf_counter() - start
    exact = exact_expected_z(5000, 50)
    lower = counterexample_lower_bound(5000, 50)
    ok = (abs(exact - EXACT_Z_5000_50) <= 1e-9 and abs(res.mean - exact) <= 3 * res.std_error
          and res.mean >= 1.9 and res.mean > res.claimed_bound and res.mean > lower and elapsed < 60)
    record(6, ok, f"mean Z {res.mean:.4f} (exact {exact:.4f}, 3SE {3 * res.std_error:.2e}) >= 1.9, "
                  f"> claimed {res.claimed_bound:.3f}, > lower {lower:.3f}, {elapsed:.1f}s < 60s")


def test_criterion_07_doubling_sums():
    start = time.perf_counter()
    rep = doubling_suite(0, count=1000)
    elapsed = time.perf_counter() - start
    failures = sum(not c.passed for c in rep.checks)
    record(7, rep.passed and elapsed < 10,
           f"{failures} failing alpha values of {len(rep.checks)}, 1000 sequences each, {elapsed:.2f}s < 10s")


def test_criterion_08_episode_bound(riverswim_ebf):
    envs = {"riverswim6": make_riverswim(6), "garnet": make_garnet(3, 2, 2, 5), "swap": make_swap(),
            "chain": make_chain(3), "bandit": make_single_state([0.3, 0.6])}
    violations, runs, literal_over = 0, 0, 0
    for m in envs.values():
        gb = solve_gain_bias(m)
        SA = m.n_states * m.n_actions
        for T in (10, 100, 1000, 10**4):
            for seed in range(3):
                for agent in ("ebf", "ucrl2"):
                    try:
                        if agent == "ebf":
                            _, d = run_ebf(m, ConfidenceParams(gb.span + 1.0, 0.05, T), T, seed, diagnostics=False)
                        else:
                            _, d = run_ucrl2(m, 0.05, T, seed)
                    except AssertionError:
                        violations += 1
                        continue
                    runs += 1
                    if SA >= 2:
                        bound = episode_bound(m.n_states, m.n_actions, T)
                        violations += d.K_completed > bound
                        literal_over += d.K > bound
    bound = episode_bound(6, 2, T_LONG)
    for _, d in riverswim_ebf[2]:
        runs += 1
        violations += d.K_completed > bound
        literal_over += d.K > bound
    record(8, violations == 0, f"{violations} violations over {runs} runs "
                               f"({literal_over} counting the horizon-truncated final episode)")


def test_criterion_09_optimism(riverswim_ebf):
    _, gb, runs, elapsed = riverswim_ebf
    episodes = [e for _, d in runs for e in d.episodes]
    covered = sum(bool(e.true_in_M and e.hstar_in_H) for e in episodes) / len(episodes)
    certified = [e for e in episodes if e.certified]
    optimistic = sum(e.rho >= gb.gain - 1e-3 for e in certified) / max(len(certified), 1)
    ok = covered >= 0.95 and len(certified) > 0 and optimistic >= 0.90 and elapsed < 600
    record(9, ok, f"true tuple in M_k and h* in H_k in {covered:.3f} >= 0.95 of {len(episodes)} episodes; "
                  f"rho_k >= rho* - 1e-3 in {optimistic:.3f} >= 0.90 of {len(certified)} certified; "
                  f"{elapsed:.0f}s < 600s")


def test_criterion_10_sublinear_regret(riverswim_ebf):
    m, _, runs, ebf_elapsed = riverswim_ebf
    start = time.perf_counter()
    curves = {"ebf": [tr for tr, _ in runs[: len(SEEDS_REGRET)]],
              "ucrl2": [run_ucrl2(m, 0.05, T_LONG, seed)[0] for seed in SEEDS_REGRET]}
    elapsed = time.perf_counter() - start + ebf_elapsed * len(SEEDS_REGRET) / len(SEEDS_OPT)
    ok = elapsed < 600
    parts = []
    for name, traces in curves.items():
        finals = [tr.final_regret for tr in traces]
        slope = regret_slope(np.mean([tr.regret for tr in traces], axis=0))
        ok &= all(0 < f <= T_LONG for f in finals) and slope is not None and slope <= 0.8
        parts.append(f"{name} final regret in [{min(finals):.0f}, {max(finals):.0f}], slope {slope:.3f} <= 0.8")
    record(10, ok, "; ".join(parts) + f"; {elapsed:.0f}s < 600s")


def test_criterion_11_learn_diameter():
    start = time.perf_counter()
    chain = make_chain(3)
    D = diameter(chain)
    close = 0
    for seed in range(10):
        d_xy, d_yx = learn_diameter(chain, 0, 2, 10**4, 0.1, seed)
        close += abs(d_xy - D) <= 1 and abs(d_yx - D) <= 1
    swap_exact = all(learn_diameter(make_swap(), 0, 1, 10**4, 0.1, seed) == (1.0, 1.0) for seed in range(10))
    elapsed = time.perf_counter() - start
    record(11, close >= 8 and swap_exact and elapsed < 120,
           f"chain within 1 of D={D:.0f} in {close}/10 seeds >= 8, swap exact: {swap_exact}, {elapsed:.1f}s < 120s")


def test_criterion_12_determinism(tmp_path):
    configs = [
        {"env": {"name": "riverswim", "parameters": {"n": 6}}, "agent": {"name": "ebf", "delta": 0.05},
         "T": 2000, "seeds": [0, 7]},
        {"env": {"name": "garnet", "parameters": {"S": 3, "A": 2, "b": 2, "seed": 4}},
         "agent": {"name": "ucrl2", "delta": 0.05}, "T": 2000, "seeds": [1]},
        {"env": {"name": "swap"}, "agent": {"name": "estimate_h", "delta": 0.05}, "T": 4096, "seeds": [2]},
    ]
    identical = True
    files = 0
    for i, obj in enumerate(configs):
        cfg = ExperimentConfig.from_dict(obj)
        a, b = tmp_path / f"{i}a", tmp_path / f"{i}b"
        run_experiment(cfg, a)
        run_experiment(cfg, b)
        names = sorted(p.name for p in a.iterdir())
        files += len(names)
        identical &= names == sorted(p.name for p in b.iterdir())
        identical &= all((a / n).read_bytes() == (b / n).read_bytes() for n in names)
    record(12, identical, f"{files} output files byte-identical across reruns of {len(configs)} configs")
