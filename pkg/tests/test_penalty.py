import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nmembranes.grid import MultiField, ScalarField, make_grid
from nmembranes.penalty import (PenaltyParams, apply_B, penalty_params,
                                t_monotone_pairing, theta_eps, theta_eps_array,
                                xi_coefficients, xi_stack)

finite_floats = st.floats(min_value=-50.0, max_value=50.0,
                          allow_nan=False, allow_infinity=False)


class TestTheta:
    def test_nonnegative_argument(self):
        assert theta_eps(0.2, 0.5) == 0.0
        assert theta_eps(0.2, 1e-8) == 0.0

    def test_saturated_branch(self):
        assert theta_eps(-2.0, 0.5) == -1.0

    def test_ramp_branch(self):
        assert theta_eps(-0.25, 0.5) == -0.5

    def test_infinities(self):
        assert theta_eps(np.inf, 0.1) == 0.0
        assert theta_eps(-np.inf, 0.1) == -1.0

    def test_requires_positive_epsilon(self):
        with pytest.raises(ValueError):
            theta_eps(0.0, 0.0)

    @given(finite_floats, st.floats(min_value=1e-6, max_value=10.0))
    @settings(max_examples=300)
    def test_range_and_monotonicity(self, s, eps):
        v = theta_eps(s, eps)
        assert -1.0 <= v <= 0.0
        assert theta_eps(s + 0.125, eps) >= v
        if s >= 0:
            assert v == 0.0

    def test_array_version_agrees(self):
        s = np.array([-2.0, -0.25, 0.0, 0.3, -0.5])
        eps = 0.5
        expected = [theta_eps(x, eps) for x in s]
        assert np.array_equal(theta_eps_array(s, eps), expected)


class TestXi:
    def test_all_zero_source(self):
        assert xi_coefficients((0.0, 0.0, 0.0)) == (0.0, 0.0, 0.0, 0.0)

    def test_increasing_source(self):
        assert xi_coefficients((2.0, 4.0, 6.0)) == (4.0, 2.0, 2.0, 0.0)

    def test_decreasing_source(self):
        assert xi_coefficients((3.0, 1.0)) == (3.0, 0.0, 2.0)

    @given(st.lists(finite_floats, min_size=1, max_size=8))
    @settings(max_examples=500)
    def test_nonnegative(self, f):
        # xi_0 is the max prefix mean (any sign); the weights are xi_1..xi_N
        xi = xi_coefficients(f)
        assert len(xi) == len(f) + 1
        assert all(v >= 0.0 for v in xi[1:])

    @given(st.lists(finite_floats, min_size=1, max_size=6))
    @settings(max_examples=200)
    def test_vanishes_where_prefix_mean_is_maximal(self, f):
        xi = xi_coefficients(f)
        means = np.cumsum(f) / np.arange(1, len(f) + 1)
        i_star = int(np.argmax(means)) + 1
        assert xi[i_star] == 0.0

    def test_stack_matches_scalar_version(self):
        rng = np.random.default_rng(2)
        f = rng.standard_normal((4, 7))
        stacked = xi_stack(f)
        for j in range(7):
            assert np.allclose(stacked[:, j], xi_coefficients(f[:, j]),
                               atol=1e-14)


def ordered_state(grid, rows):
    return MultiField.from_stack(grid, np.asarray(rows, dtype=float))


class TestApplyB:
    def setup_method(self):
        self.grid = make_grid(1, 4)

    def params_for(self, f_rows, eps=0.5):
        return penalty_params(ordered_state(self.grid, f_rows), eps)

    def test_vanishes_on_ordered_state(self):
        params = self.params_for([[1.0] * 4, [2.0] * 4, [3.0] * 4])
        v = ordered_state(self.grid, [[3.0] * 4, [2.0] * 4, [1.0] * 4])
        out = apply_B(v, params)
        assert np.all(out.stack() == 0.0)

    def test_single_component_is_zero(self):
        params = self.params_for([[5.0] * 4])
        v = ordered_state(self.grid, [[9.0, -3.0, 2.0, 0.0]])
        assert np.all(apply_B(v, params).stack() == 0.0)

    def test_two_component_node_formula(self):
        eps = 0.5
        f = ordered_state(self.grid, [[1.0] * 4, [3.0] * 4])
        params = penalty_params(f, eps)
        xi1 = params.xi[1].values
        v = ordered_state(self.grid, [[0.0] * 4, [eps / 2] * 4])  # gap -eps/2
        out = apply_B(v, params).stack()
        assert np.allclose(out[0], xi1 * (-0.5))
        assert np.allclose(out[1], -xi1 * (-0.5))

    def test_component_sum_telescopes_to_zero(self):
        rng = np.random.default_rng(7)
        f = ordered_state(self.grid, rng.standard_normal((5, 4)))
        params = penalty_params(f, 0.1)
        v = ordered_state(self.grid, rng.standard_normal((5, 4)))
        out = apply_B(v, params).stack()
        assert np.allclose(out.sum(axis=0), 0.0, atol=1e-12)

    def test_rejects_nonnegative_violation(self):
        bad = tuple(ScalarField(self.grid, np.full(4, v)) for v in (1.0, -0.1))
        with pytest.raises(ValueError):
            PenaltyParams(0.5, bad)


class TestTMonotone:
    def setup_method(self):
        self.grid = make_grid(1, 6)
        rng = np.random.default_rng(0)
        f = MultiField.from_stack(self.grid, rng.standard_normal((3, 6)))
        self.params = penalty_params(f, 0.25)

    def test_identical_states_pair_to_zero(self):
        rng = np.random.default_rng(1)
        v = MultiField.from_stack(self.grid, rng.standard_normal((3, 6)))
        assert t_monotone_pairing(v, v, self.params) == 0.0

    def test_ordered_reference_state(self):
        rng = np.random.default_rng(2)
        w = ordered_state(self.grid, [[2.0] * 6, [1.0] * 6, [0.0] * 6])
        for seed in range(20):
            rng = np.random.default_rng(seed)
            v = MultiField.from_stack(self.grid, rng.standard_normal((3, 6)))
            assert t_monotone_pairing(v, w, self.params) >= -1e-12

    @given(st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=150)
    def test_random_pairs_nonnegative(self, seed):
        rng = np.random.default_rng(seed)
        v = MultiField.from_stack(self.grid, 3 * rng.standard_normal((3, 6)))
        w = MultiField.from_stack(self.grid, 3 * rng.standard_normal((3, 6)))
        assert t_monotone_pairing(v, w, self.params) >= -1e-12
