import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_force_diameter, brute_force_gain, random_mdp
from ebflab.envs import make_chain, make_garnet, make_riverswim, make_single_state, make_swap
from ebflab.errors import ConvergenceError, InvalidInput
from ebflab.mdp import (
    Mdp,
    bellman_residual,
    diameter,
    flatten,
    hitting_times,
    load_mdp,
    optimal_gap,
    optimal_gaps,
    save_mdp,
    solve_gain_bias,
    span,
    variance_rows,
    variance_weighted,
)

# RiverSwim-6 optimal gain: stationary mass of the rightmost state under
# always-RIGHT, solved in exact rational arithmetic (16807 / 19608).
RIVERSWIM6_GAIN = 16807 / 19608
# Brute-force hitting-time enumeration over all 64 policies.
RIVERSWIM6_DIAMETER = 16.111144166121253


class TestMdpValidation:
    def test_rows_must_sum_to_one(self):
        P = np.array([[[0.5, 0.4]], [[0.0, 1.0]]])
        with pytest.raises(InvalidInput):
            Mdp(P, np.zeros((2, 1)))

    def test_tiny_row_error_is_tolerated(self):
        P = np.array([[[0.5, 0.5 + 1e-13]], [[0.0, 1.0]]])
        Mdp(P, np.zeros((2, 1)))

    def test_rewards_in_unit_interval(self):
        with pytest.raises(InvalidInput):
            Mdp(np.ones((1, 1, 1)), np.array([[1.5]]))
        Mdp(np.ones((1, 1, 1)), np.array([[1.5]]), unconstrained_rewards=True)

    def test_shape_mismatch(self):
        with pytest.raises(InvalidInput):
            Mdp(np.ones((2, 1, 1)), np.zeros((2, 1)))

    def test_json_roundtrip(self, tmp_path):
        m = make_garnet(3, 2, 2, seed=1)
        path = tmp_path / "m.json"
        save_mdp(m, path)
        back = load_mdp(path)
        assert np.array_equal(back.P, m.P) and np.array_equal(back.r, m.r)
        obj = json.loads(path.read_text())
        assert set(obj) == {"S", "A", "P", "r", "s0"}

    def test_declared_shape_checked(self):
        obj = make_swap().to_json()
        obj["S"] = 3
        with pytest.raises(InvalidInput):
            Mdp.from_json(obj)


class TestSolveGainBias:
    def test_two_cycle(self):
        gb = solve_gain_bias(make_swap())
        assert gb.gain == pytest.approx(0.5, abs=1e-10)
        assert np.allclose(gb.bias, [0.5, 0.0], atol=1e-9)

    def test_single_state_picks_best_action(self):
        gb = solve_gain_bias(make_single_state([0.2, 0.7, 0.7]))
        assert gb.gain == pytest.approx(0.7)
        assert gb.policy[0] == 1

    def test_riverswim_gain(self):
        gb = solve_gain_bias(make_riverswim(6))
        assert gb.gain == pytest.approx(RIVERSWIM6_GAIN, abs=1e-8)
        assert np.all(gb.policy == 1)
        assert gb.bias.min() == 0.0

    def test_matches_policy_enumeration(self):
        for seed in range(20):
            rng = np.random.default_rng(seed)
            m = make_garnet(int(rng.integers(2, 5)), int(rng.integers(1, 4)), 2, seed)
            gb = solve_gain_bias(m)
            assert gb.gain == pytest.approx(brute_force_gain(m), abs=1e-6)
            assert gb.residual <= 1e-9

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.integers(1, 4), st.integers(1, 3))
    def test_bellman_equation_holds(self, seed, S, A):
        m = random_mdp(np.random.default_rng(seed), S, A)
        gb = solve_gain_bias(m)
        assert bellman_residual(m, gb.gain, gb.bias) <= 1e-8
        assert gb.span == pytest.approx(span(gb.bias))

    def test_non_converging_raises(self):
        with pytest.raises(ConvergenceError):
            solve_gain_bias(make_riverswim(6), tol=1e-10, max_iter=3)


class TestDiameter:
    def test_single_state(self):
        assert diameter(make_single_state([0.3])) == 0.0

    def test_chain(self):
        assert diameter(make_chain(3)) == pytest.approx(2.0)
        assert diameter(make_chain(5)) == pytest.approx(4.0)

    def test_riverswim(self):
        assert diameter(make_riverswim(6)) == pytest.approx(RIVERSWIM6_DIAMETER, rel=1e-9)

    def test_matches_brute_force(self):
        for seed in range(20):
            m = make_garnet(3, 2, 2, seed)
            assert diameter(m) == pytest.approx(brute_force_diameter(m), abs=1e-6)

    def test_unreachable_state(self):
        P = np.array([[[1.0, 0.0]], [[0.5, 0.5]]])
        with pytest.raises(ConvergenceError, match="diameter infinite"):
            diameter(Mdp(P, np.zeros((2, 1))))

    def test_hitting_times_zero_at_target(self):
        t = hitting_times(make_chain(4), 2)
        assert np.allclose(t, [2, 1, 0, 1])


class TestGapsAndFlattening:
    def test_gaps_nonnegative_and_zero_on_optimal(self):
        m = make_garnet(4, 3, 3, 5)
        gb = solve_gain_bias(m)
        g = optimal_gaps(m, gb)
        assert g.min() >= -1e-8
        assert np.allclose(g[np.arange(4), gb.policy], 0.0, atol=1e-8)
        assert optimal_gap(m, gb, 1, 2) == pytest.approx(g[1, 2])

    def test_gap_index_check(self):
        m = make_swap()
        with pytest.raises(InvalidInput):
            optimal_gap(m, solve_gain_bias(m), 0, 1)

    def test_flatten_keeps_gain_and_bias(self):
        m = make_garnet(4, 2, 3, 11)
        gb = solve_gain_bias(m)
        flat = flatten(m, gb)
        gb2 = solve_gain_bias(flat)
        assert flat.unconstrained_rewards
        assert gb2.gain == pytest.approx(gb.gain, abs=1e-8)
        assert np.allclose(gb2.bias, gb.bias, atol=1e-7)
        assert np.allclose(optimal_gaps(flat, gb), 0.0, atol=1e-12)


class TestVariance:
    def test_point_mass(self):
        assert variance_weighted([0, 1, 0], [3.0, 5.0, 7.0]) == 0.0

    def test_known_value(self):
        assert variance_weighted([0.5, 0.5], [0.0, 2.0]) == pytest.approx(1.0)

    def test_length_mismatch(self):
        with pytest.raises(InvalidInput):
            variance_weighted([0.5, 0.5], [1.0, 2.0, 3.0])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10**6), st.floats(-50, 50))
    def test_shift_invariant(self, seed, c):
        rng = np.random.default_rng(seed)
        x = rng.dirichlet(np.ones(5))
        h = rng.random(5) * 10
        assert variance_weighted(x, h + c) == pytest.approx(variance_weighted(x, h), abs=1e-9)

    def test_rows_match_scalar(self):
        rng = np.random.default_rng(0)
        p = rng.dirichlet(np.ones(4), size=(3, 2))
        h = rng.random(4)
        rows = variance_rows(p, h)
        for i in range(3):
            for j in range(2):
                assert rows[i, j] == pytest.approx(variance_weighted(p[i, j], h))
