import numpy as np
import pytest
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from nmembranes.config import ProblemConfig, SourceSpec, SourceTerm
from nmembranes.evolution import (EvolutionState, SolverFailure, solve_evolution,
                                  step_double_obstacle, step_penalized)
from nmembranes.grid import MultiField, ScalarField, make_grid
from nmembranes.penalty import penalty_params, xi_stack
from nmembranes.plap import PFluxParams, apply_p_laplacian, discrete_P, \
    linearize_p_laplacian


def const_config(n_comp, f_consts, n_x=32, p=2.0, t_final=0.2, dt=1e-3,
                 epsilon=1e-4, h_consts=None, **kw):
    grid = make_grid(1, n_x)
    sources = tuple(SourceSpec((SourceTerm("const", (c,)),)) for c in f_consts)
    if h_consts is None:
        initials = tuple(SourceSpec() for _ in range(n_comp))
    else:
        initials = tuple(SourceSpec((SourceTerm("const", (c,)),))
                         for c in h_consts)
    return ProblemConfig(grid=grid, n_membranes=n_comp, p=p, t_final=t_final,
                         dt=dt, epsilon=epsilon, sources=sources,
                         initials=initials, **kw)


def heat_step_direct(grid, u_old, f, dt):
    """Independent implicit heat step: sparse direct solve of the p=2 system."""
    L = linearize_p_laplacian(ScalarField(grid, u_old), PFluxParams(2.0))
    A = (L + sp.identity(grid.n_nodes) / dt).tocsc()
    return spsolve(A, u_old / dt + f)


class TestStepPenalized:
    def test_single_membrane_is_plain_heat_step(self):
        grid = make_grid(1, 24)
        rng = np.random.default_rng(0)
        u_old = rng.standard_normal(grid.n_nodes)
        f = rng.standard_normal(grid.n_nodes)
        dt = 0.01
        state = EvolutionState(0.0, MultiField.from_stack(grid, u_old[None, :]))
        f_field = MultiField.from_stack(grid, f[None, :])
        params = penalty_params(f_field, 1e-4)
        out = step_penalized(state, dt, f_field, params, PFluxParams(2.0), 1e-11)
        expected = heat_step_direct(grid, u_old, f, dt)
        assert np.max(np.abs(out.u.stack()[0] - expected)) < 1e-8
        assert out.last_report.converged

    def test_ordered_separated_components_decouple(self):
        grid = make_grid(1, 24)
        x = grid.coordinates()[0]
        top = 2.0 + np.sin(np.pi * x)
        bottom = -2.0 + np.sin(2 * np.pi * x)
        state = EvolutionState(0.0, MultiField.from_stack(
            grid, np.stack([top, bottom])))
        f_field = MultiField.zeros(grid, 2)
        params = penalty_params(f_field, 1e-4)
        dt = 0.005
        out = step_penalized(state, dt, f_field, params, PFluxParams(2.0), 1e-11)
        for i, comp in enumerate([top, bottom]):
            expected = heat_step_direct(grid, comp, np.zeros(grid.n_nodes), dt)
            assert np.max(np.abs(out.u.stack()[i] - expected)) < 1e-8

    def test_nonconvergence_signals_failure_with_report(self):
        grid = make_grid(1, 8)
        state = EvolutionState(0.0, MultiField.zeros(grid, 2))
        f_field = MultiField.from_stack(
            grid, np.stack([np.full(8, -3.0), np.full(8, 3.0)]))
        params = penalty_params(f_field, 1e-4)
        with pytest.raises(SolverFailure) as err:
            step_penalized(state, 0.01, f_field, params, PFluxParams(2.0),
                           1e-12, max_iter=0)
        assert err.value.report.converged is False

    def test_step_is_deterministic(self):
        config = const_config(2, (-5.0, 5.0))
        a = solve_evolution(config).final_state.u.stack()
        b = solve_evolution(config).final_state.u.stack()
        assert np.array_equal(a, b)


class TestSolveEvolution:
    def test_zero_data_stays_zero(self):
        config = const_config(2, (0.0, 0.0), t_final=0.05)
        result = solve_evolution(config)
        assert np.all(result.final_state.u.stack() == 0.0)

    def test_single_membrane_poisson_limit(self):
        # with f = 1 the state relaxes to the discrete stationary profile,
        # whose nodal values are exactly x(1-x)/2
        config = const_config(1, (1.0,), n_x=63, t_final=1.5, dt=5e-3)
        result = solve_evolution(config)
        u = result.final_state.u.stack()[0]
        assert abs(u.max() - 0.125) <= 2 * config.grid.h_x ** 2

    def test_symmetric_pair_stays_equal(self):
        grid = make_grid(1, 24)
        init = SourceSpec((SourceTerm("sinprod", (0.3, 1)),))
        src = SourceSpec((SourceTerm("const", (1.0,)),))
        config = ProblemConfig(grid=grid, n_membranes=2, t_final=0.1, dt=2e-3,
                               epsilon=1e-4, sources=(src, src),
                               initials=(init, init))
        result = solve_evolution(config)
        u = result.final_state.u.stack()
        assert np.max(np.abs(u[0] - u[1])) <= 1e-12

    def test_contact_run_respects_ordering_defect_bound(self):
        config = const_config(2, (-5.0, 5.0), n_x=48, t_final=0.1,
                              epsilon=1e-4, newton_tol=1e-9)
        result = solve_evolution(config)
        defects = result.timeseries.column("ordering_defect")
        assert np.max(defects) <= config.epsilon + 10 * config.newton_tol
        # contact actually happened
        assert result.timeseries.column("area_chi_1_2")[-1] > 0

    def test_penalized_residual_bounds(self):
        # the reaction the solver adds is sandwiched by the penalty weights:
        # f_i - xi_{i-1} <= P u_i <= f_i + xi_i up to solver noise
        config = const_config(3, (-6.0, 0.0, 6.0), n_x=32, t_final=0.05,
                              newton_tol=1e-10)
        result = solve_evolution(config, record_trajectory=True)
        slack = 100 * config.newton_tol
        pflux = config.pflux
        for prev, curr in zip(result.trajectory[:-1], result.trajectory[1:]):
            f = config.f_values(curr.t)
            xi = xi_stack(f)
            for i in range(3):
                pu = discrete_P(curr.u.components[i], prev.u.components[i],
                                config.dt, pflux).values
                assert np.all(pu >= f[i] - xi[i] - slack)
                assert np.all(pu <= f[i] + xi[i + 1] + slack)

    def test_snapshots_at_requested_times(self):
        config = const_config(1, (1.0,), t_final=0.1, dt=0.01,
                              snapshot_times=(0.05, 0.1))
        result = solve_evolution(config)
        assert [round(s.t, 6) for s in result.snapshots] == [0.05, 0.1]


class TestDoubleObstacle:
    def setup_method(self):
        self.grid = make_grid(1, 48)
        self.x = self.grid.coordinates()[0]
        self.pflux = PFluxParams(2.0)

    def test_no_obstacles_is_unconstrained_step(self):
        rng = np.random.default_rng(3)
        w_old = ScalarField(self.grid, rng.standard_normal(self.grid.n_nodes))
        phi = ScalarField(self.grid, rng.standard_normal(self.grid.n_nodes))
        dt = 0.01
        out = step_double_obstacle(w_old, None, None, phi, dt, 1e-4,
                                   self.pflux, tol=1e-11)
        expected = heat_step_direct(self.grid, w_old.values, phi.values, dt)
        assert np.max(np.abs(out.values - expected)) < 1e-8

    def test_pressed_onto_lower_obstacle(self):
        psi2 = ScalarField.zeros(self.grid)
        phi = ScalarField(self.grid, np.full(self.grid.n_nodes, -1.0))
        w = ScalarField.zeros(self.grid)
        eps = 1e-6
        dt = 0.05
        for _ in range(40):
            w = step_double_obstacle(w, None, psi2, phi, dt, eps, self.pflux,
                                     tol=1e-11)
        # pinned near the obstacle from below by at most eps (+ solver tol)
        assert np.min(w.values - psi2.values) >= -eps - 1e-9
        contact = np.abs(w.values - psi2.values) <= 10 * eps
        assert np.count_nonzero(contact) > 0
        # P psi2 = 0 >= phi = -1 everywhere: the necessary contact condition
        # cannot fail here
        p_psi = discrete_P(psi2, psi2, dt, self.pflux).values
        assert np.all(p_psi >= phi.values)

    def test_slack_upper_obstacle_never_binds(self):
        # obstacle with P psi1 >= phi everywhere: constraint stays inactive
        psi1 = ScalarField(self.grid, 0.5 * self.x * (1 - self.x))
        p_psi1 = discrete_P(psi1, psi1, 0.01, self.pflux).values
        phi = ScalarField(self.grid, p_psi1 - 1.0)
        w_old = ScalarField.zeros(self.grid)
        dt = 0.01
        out = step_double_obstacle(w_old, psi1, None, phi, dt, 1e-6,
                                   self.pflux, tol=1e-11)
        expected = heat_step_direct(self.grid, w_old.values, phi.values, dt)
        assert np.max(np.abs(out.values - expected)) < 1e-8
        assert np.all(out.values <= psi1.values + 1e-6 + 1e-9)

    def test_band_containment(self):
        bump = 0.3 * np.exp(-((self.x - 0.5) / 0.1) ** 2 / 2)
        psi2 = ScalarField(self.grid, bump - 0.2)
        psi1 = ScalarField(self.grid, bump + 0.2)
        phi = ScalarField(self.grid, np.full(self.grid.n_nodes, -4.0))
        eps = 1e-5
        w = ScalarField(self.grid, np.clip(np.zeros(self.grid.n_nodes),
                                           psi2.values, psi1.values))
        # residual floor is about (zeta/eps)*machine-noise ~ 3e-11 here, so
        # the tolerance must sit above it
        for _ in range(30):
            w = step_double_obstacle(w, psi1, psi2, phi, 0.02, eps, self.pflux,
                                     tol=1e-9)
        assert np.all(w.values >= psi2.values - eps - 1e-8)
        assert np.all(w.values <= psi1.values + eps + 1e-8)

    def test_rejects_crossed_obstacles(self):
        psi1 = ScalarField(self.grid, np.full(self.grid.n_nodes, -1.0))
        psi2 = ScalarField.zeros(self.grid)
        phi = ScalarField.zeros(self.grid)
        with pytest.raises(ValueError):
            step_double_obstacle(ScalarField.zeros(self.grid), psi1, psi2,
                                 phi, 0.01, 1e-4, self.pflux)
