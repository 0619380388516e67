import math

import mpmath
import numpy as np
import pytest

from ebflab.errors import ConfigError, InvalidInput
from ebflab.validation import (
    check_doubling_sums,
    claimed_expectation_bound,
    counterexample_lower_bound,
    counterexample_mc,
    doubling_sum,
    exact_expected_z,
    max_segment_deviation,
    random_doubling_sequences,
    validate,
    wilson_interval,
)
from ebflab.trajectory import Trajectory


def mp_expected_z(S, n):
    """High-precision E[Z] from the binomial marginal of one category."""
    mpmath.mp.dps = 40
    p = mpmath.mpf(1) / S
    total = mpmath.mpf(0)
    for k in range(n + 1):
        total += mpmath.binomial(n, k) * p ** k * (1 - p) ** (n - k) * abs(mpmath.mpf(k) / n - p)
    return S * total


# E[Z] for S = 5000, n = 50, frozen from the 40-digit evaluation above.
EXACT_Z_5000_50 = 1.980097687135606


class TestCounterexample:
    def test_exact_matches_high_precision(self):
        assert float(mp_expected_z(5000, 50)) == pytest.approx(EXACT_Z_5000_50, abs=1e-9)
        assert exact_expected_z(5000, 50) == pytest.approx(EXACT_Z_5000_50, abs=1e-9)
        assert exact_expected_z(7, 13) == pytest.approx(float(mp_expected_z(7, 13)), rel=1e-12)

    def test_bounds(self):
        assert claimed_expectation_bound(50) == pytest.approx(0.831, abs=1e-3)
        assert counterexample_lower_bound(5000, 50) == pytest.approx(0.990, abs=1e-3)

    def test_mc_close_to_exact(self):
        res = counterexample_mc(5000, 50, 2000, 0)
        assert abs(res.mean - EXACT_Z_5000_50) <= 3 * res.std_error
        assert res.mean >= 1.9 > res.claimed_bound

    def test_small_case(self):
        res = counterexample_mc(4, 10, 4000, 1)
        assert abs(res.mean - exact_expected_z(4, 10)) <= 4 * res.std_error

    def test_invalid(self):
        with pytest.raises(InvalidInput):
            counterexample_mc(1, 10, 10, 0)


class TestDoublingSums:
    def test_maximal_sequence(self):
        lhs, rhs = doubling_sum([1, 1, 2, 4, 8], 0.5)
        assert lhs == pytest.approx(1 + 1 + 2 / math.sqrt(2) + 4 / 2 + 8 / math.sqrt(8))
        assert lhs == pytest.approx(8.243, abs=1e-3)
        assert rhs == pytest.approx(11.314, abs=1e-3)

    def test_harmonic(self):
        N = 30
        lhs, rhs = doubling_sum([1.0] * N, 1.0)
        assert lhs == pytest.approx(1 + sum(1 / (n - 1) for n in range(2, N + 1)))
        assert lhs <= rhs

    @pytest.mark.parametrize("bad", [[2, 1], [1, 2], [1, 1, 3], [1, 0.0]])
    def test_precondition(self, bad):
        with pytest.raises(InvalidInput):
            doubling_sum(bad, 0.5)

    def test_alpha_range(self):
        with pytest.raises(InvalidInput):
            doubling_sum([1, 1], 0.0)

    def test_random_sequences(self):
        seqs = random_doubling_sequences(300, np.random.default_rng(0))
        for alpha in (0.25, 0.5, 0.75, 1.0):
            assert check_doubling_sums(seqs, alpha).passed


class TestSuites:
    def test_unknown_suite(self):
        with pytest.raises(ConfigError):
            validate("nope")

    @pytest.mark.parametrize("suite", ["doubling", "coverage", "counterexample", "lemmaB5", "lemma1"])
    def test_suite_passes(self, suite):
        rep = validate(suite, 0)
        assert rep.passed, rep.lines()
        assert all(c.threshold_source in {"derived", "exact", "reported"} for c in rep.checks)
        assert rep.to_json()["suite"] == suite

    def test_report_lines(self):
        rep = validate("doubling")
        assert all(line.startswith("PASS") for line in rep.lines())

    def test_wilson(self):
        lo, hi = wilson_interval(10, 100)
        assert lo < 0.1 < hi
        assert wilson_interval(0, 50)[0] == pytest.approx(0.0, abs=1e-15)

    def test_segment_deviation(self):
        traj = Trajectory([0, 1, 0, 1], [0, 0, 0], [1.0, 0.0, 1.0])
        # segments [1, 2) and [3, 4): each contributes (h1 - h0) + (1 - rho)
        h = np.array([0.0, 0.25])
        assert max_segment_deviation(traj, h, 0.5, 0, 1) == pytest.approx(1.5)
        assert max_segment_deviation(Trajectory.empty(0), h, 0.5, 0, 1) == 0.0
