"""Independent brute-force oracles shared by the test modules."""

import itertools

import numpy as np
import pytest

from ebflab.mdp import Mdp


def policy_chains(mdp: Mdp):
    S, A = mdp.n_states, mdp.n_actions
    for pol in itertools.product(range(A), repeat=S):
        pol = np.array(pol)
        yield pol, mdp.P[np.arange(S), pol], mdp.r[np.arange(S), pol]


def cesaro_limit(Pp: np.ndarray, squarings: int = 60) -> np.ndarray:
    """Limit matrix of a finite chain via repeated squaring of the lazy chain."""
    M = 0.5 * (np.eye(len(Pp)) + Pp)
    for _ in range(squarings):
        M = M @ M
        # renormalise so rounding drift cannot compound over 2**squarings steps
        M /= M.sum(axis=1, keepdims=True)
    return M


def brute_force_gain(mdp: Mdp) -> float:
    """Best gain over deterministic policies, maximised over start states."""
    best = -np.inf
    for _, Pp, rp in policy_chains(mdp):
        best = max(best, float((cesaro_limit(Pp) @ rp).max()))
    return best


def brute_force_diameter(mdp: Mdp) -> float:
    """max over ordered pairs of min over deterministic policies of the expected hitting time."""
    S = mdp.n_states
    if S == 1:
        return 0.0
    worst = 0.0
    for target in range(S):
        best = np.full(S, np.inf)
        others = [s for s in range(S) if s != target]
        for _, Pp, _ in policy_chains(mdp):
            Q = Pp[np.ix_(others, others)]
            # finite hitting time iff every state reachable before the target can reach it
            ok = np.zeros(S, dtype=bool)
            ok[target] = True
            for _ in range(S):
                ok = ok | ((Pp > 0) & ok[None, :]).any(axis=1)
            for _ in range(S):
                leaks = ((Pp > 0) & ~ok[None, :]).any(axis=1)
                leaks[target] = False
                ok = ok & ~leaks
            ok = ok[others]
            times = np.full(S, np.inf)
            times[target] = 0.0
            idx = [others[i] for i in range(len(others)) if ok[i]]
            if idx:
                Qs = Pp[np.ix_(idx, idx)]
                times[idx] = np.linalg.solve(np.eye(len(idx)) - Qs, np.ones(len(idx)))
            best = np.minimum(best, times)
        worst = max(worst, float(best[others].max()))
    return worst


def naive_segments(states, s, s_next):
    """Arrival segments by literal rescanning of the 1-based state list."""
    states = list(states)
    N = len(states) - 1
    never = N + 2

    def first_after(target, after):
        for t in range(after + 1, N + 2):
            if states[t - 1] == target:
                return t
        return never

    starts, ends = [], []
    ts = first_after(s, 0)
    while ts != never:
        te = first_after(s_next, ts)
        starts.append(ts)
        ends.append(te)
        if te == never:
            break
        ts = first_after(s, te)
    count = sum(1 for e in ends if e <= N + 1)
    return starts, ends, count


def naive_l1(h, s, s_next, states, rewards, rho_hat):
    starts, ends, count = naive_segments(states, s, s_next)
    total = 0.0
    for k in range(count):
        total += h[s_next] - h[s]
        for t in range(starts[k], ends[k]):
            total += rewards[t - 1] - rho_hat
    return total


def random_mdp(rng, S, A, support=None):
    """Random dense-ish MDP; rows get random zeros when ``support`` is given."""
    P = rng.random((S, A, S))
    if support is not None:
        mask = np.zeros_like(P, dtype=bool)
        for s in range(S):
            for a in range(A):
                mask[s, a, rng.choice(S, size=support, replace=False)] = True
        P = np.where(mask, P, 0.0)
    P /= P.sum(axis=2, keepdims=True)
    return Mdp(P, rng.random((S, A)), 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
