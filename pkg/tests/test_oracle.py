import numpy as np
import pytest

from nmembranes.evolution import SolverFailure
from nmembranes.grid import MultiField, ScalarField, make_grid
from nmembranes.oracle import (p2_energy, pgs_sweep, solve_stationary,
                               step_projected)
from nmembranes.plap import PFluxParams, apply_p_laplacian
from tests.test_evolution import heat_step_direct


def const_multifield(grid, values):
    return MultiField.from_stack(
        grid, np.stack([np.full(grid.n_nodes, v) for v in values]))


class TestStepProjected:
    def test_rejects_unordered_input(self):
        grid = make_grid(1, 8)
        u = const_multifield(grid, (0.0, 1.0))
        f = MultiField.zeros(grid, 2)
        with pytest.raises(ValueError):
            step_projected(u, 0.01, f, PFluxParams(2.0), 1e-10)

    def test_projection_inactive_matches_unconstrained(self):
        grid = make_grid(1, 32)
        x = grid.coordinates()[0]
        u0 = np.stack([1.0 + np.sin(np.pi * x), -1.0 - np.sin(np.pi * x)])
        u = MultiField.from_stack(grid, u0)
        f = const_multifield(grid, (2.0, -2.0))  # keeps the gap open
        dt = 0.01
        out = step_projected(u, dt, f, PFluxParams(2.0), 1e-11).stack()
        for i in range(2):
            expected = heat_step_direct(grid, u0[i], f.stack()[i], dt)
            assert np.max(np.abs(out[i] - expected)) < 1e-7

    def test_output_ordered_exactly(self):
        grid = make_grid(1, 24)
        u = MultiField.zeros(grid, 3)
        f = const_multifield(grid, (-4.0, 0.0, 4.0))
        state = u
        for _ in range(20):
            state = step_projected(state, 0.01, f, PFluxParams(2.0), 1e-10)
            vals = state.stack()
            assert np.all(vals[:-1] >= vals[1:])

    def test_contact_forcing_creates_coincidence(self):
        grid = make_grid(1, 48)
        f = const_multifield(grid, (-5.0, 5.0))
        u = MultiField.zeros(grid, 2)
        for _ in range(100):
            u = step_projected(u, 0.01, f, PFluxParams(2.0), 1e-10)
        vals = u.stack()
        contact = vals[0] == vals[1]
        assert np.count_nonzero(contact) > grid.n_nodes // 4

    def test_max_sweeps_exhaustion_raises(self):
        grid = make_grid(1, 16)
        f = const_multifield(grid, (3.0,))
        u = MultiField.zeros(grid, 1)
        with pytest.raises(SolverFailure):
            step_projected(u, 0.1, f, PFluxParams(2.0), 0.0, max_sweeps=3)


class TestSolveStationary:
    def test_zero_source(self):
        grid = make_grid(1, 16)
        out = solve_stationary(MultiField.zeros(grid, 2), PFluxParams(2.0),
                               1e-10)
        assert np.all(out.stack() == 0.0)

    def test_poisson_analytic_profile(self):
        grid = make_grid(1, 64)
        f = const_multifield(grid, (1.0,))
        u = solve_stationary(f, PFluxParams(2.0), 1e-10).stack()[0]
        x = grid.coordinates()[0]
        exact = x * (1 - x) / 2
        assert np.max(np.abs(u - exact)) <= 1e-7
        assert abs(u.max() - 0.125) <= 2 * grid.h_x ** 2

    def test_symmetric_components_coincide(self):
        grid = make_grid(1, 32)
        for p in (2.0, 3.0):
            f = const_multifield(grid, (1.0, 1.0))
            u = solve_stationary(f, PFluxParams(p), 1e-10).stack()
            assert np.max(np.abs(u[0] - u[1])) <= 1e-10

    def test_p3_fixed_point_satisfies_discrete_equation(self):
        # where no constraint binds, the stationary iterate must satisfy the
        # same edge-flux equations the operator module evaluates
        grid = make_grid(1, 24)
        f = const_multifield(grid, (1.0,))
        params = PFluxParams(3.0, 1e-6)
        u = solve_stationary(f, params, 1e-12)
        residual = apply_p_laplacian(u.components[0], params).values - 1.0
        assert np.max(np.abs(residual)) <= 1e-7

    def test_contact_pattern_stable_under_tol_halving(self):
        grid = make_grid(1, 32)
        f = const_multifield(grid, (-4.0, 1.0, 5.0))
        coarse = solve_stationary(f, PFluxParams(2.0), 1e-9).stack()
        fine = solve_stationary(f, PFluxParams(2.0), 5e-10).stack()
        mask_c = np.abs(coarse[0] - coarse[1]) <= grid.h_x
        mask_f = np.abs(fine[0] - fine[1]) <= grid.h_x
        assert np.array_equal(mask_c, mask_f)


class TestSweepEnergy:
    def test_p2_energy_never_increases_per_sweep(self):
        grid = make_grid(1, 24)
        rng = np.random.default_rng(5)
        f = rng.standard_normal((3, grid.n_nodes))
        u = np.sort(rng.standard_normal((3, grid.n_nodes)), axis=0)[::-1].copy()
        mass = 10.0
        rhs = f + mass * rng.standard_normal((3, grid.n_nodes)) * 0.1
        energies = [p2_energy(u, rhs, mass, grid)]
        for _ in range(30):
            pgs_sweep(u, rhs, mass, grid, PFluxParams(2.0))
            energies.append(p2_energy(u, rhs, mass, grid))
        diffs = np.diff(energies)
        assert np.all(diffs <= 1e-12)

    def test_2d_sweep_reduces_to_five_point_solution(self):
        grid = make_grid(2, 8, 1.0, 8, 1.0)
        f = MultiField.from_stack(grid, np.ones((1, grid.n_nodes)))
        u = solve_stationary(f, PFluxParams(2.0), 1e-11).stack()[0]
        res = apply_p_laplacian(ScalarField(grid, u), PFluxParams(2.0)).values
        assert np.max(np.abs(res - 1.0)) <= 1e-7
