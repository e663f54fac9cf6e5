"""Backward-Euler marching of the penalized membrane system.

Each implicit step solves the coupled N-component nonlinear system

    (u_i - u_i_old)/dt - Delta_p u_i + B_i(u) = f_i

by a damped semismooth Newton iteration: the penalty activation is
piecewise linear, so its a.e. derivative (0 or 1/eps) enters the Jacobian,
which stays symmetric positive definite (mass + monotone diffusion +
nonnegative pair coupling).  Linear solves are conjugate gradients with
Jacobi preconditioning, with a sparse direct fallback.

The same Newton loop drives the penalized double-obstacle step, where the
obstacle reactions are weighted by the positive/negative parts of the
obstacle residuals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, cg, spsolve

from . import analysis
from .config import ProblemConfig, initial_state
from .grid import MultiField, ScalarField, l2_norm, lp_grad_norm
from .penalty import (PenaltyParams, penalty_params, theta_eps_antiderivative_array,
                      theta_eps_array, theta_eps_derivative_array, xi_stack)
from .plap import (PFluxParams, apply_p_laplacian, discrete_P, edge_energy,
                   linearize_p_laplacian)

__all__ = [
    "SolveReport",
    "EvolutionState",
    "EvolutionResult",
    "SolverFailure",
    "TimeSeries",
    "step_penalized",
    "step_double_obstacle",
    "solve_evolution",
]

MAX_NEWTON_ITERATIONS = 50
CG_RTOL = 1e-10


@dataclass(frozen=True)
class SolveReport:
    newton_iterations: int
    final_residual_norm: float
    ordering_defect: float
    converged: bool

    def __post_init__(self):
        if self.final_residual_norm < 0:
            raise ValueError("residual norm cannot be negative")


@dataclass(frozen=True)
class EvolutionState:
    t: float
    u: MultiField
    step_index: int = 0
    last_report: SolveReport | None = None


class SolverFailure(RuntimeError):
    """Implicit step did not converge; carries the last report and time."""

    def __init__(self, message: str, report: SolveReport, t: float):
        super().__init__(f"{message} (t = {t:g})")
        self.report = report
        self.t = t


@dataclass
class TimeSeries:
    columns: list[str]
    rows: list[list[float]] = field(default_factory=list)

    def append(self, row: Sequence[float]):
        if len(row) != len(self.columns):
            raise ValueError("row length does not match columns")
        self.rows.append([float(v) for v in row])

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([row[i] for row in self.rows])


@dataclass
class EvolutionResult:
    final_state: EvolutionState
    snapshots: list[EvolutionState]
    timeseries: TimeSeries
    trajectory: list[EvolutionState] | None
    warnings: list[str]


def _solve_spd(J: sp.csr_matrix, rhs: np.ndarray) -> np.ndarray:
    diag = J.diagonal()
    precond = LinearOperator(J.shape, matvec=lambda x: x / diag)
    x, info = cg(J, rhs, rtol=CG_RTOL, atol=0.0, M=precond,
                 maxiter=20 * J.shape[0])
    if info != 0:
        x = spsolve(J.tocsc(), rhs)
    return x


def _damped_newton(u0: np.ndarray,
                   residual: Callable[[np.ndarray], np.ndarray],
                   jacobian: Callable[[np.ndarray], sp.csr_matrix],
                   energy: Callable[[np.ndarray], float],
                   tol: float, max_iter: int) -> tuple[np.ndarray, int, float, bool]:
    """Newton with Armijo bisection on the convex step energy.

    Both penalized systems are gradients of strictly convex functionals
    (mass + edge energy + activation potential), so the SPD-Jacobian Newton
    direction descends ``energy`` and the damped iteration is globally
    convergent; convergence itself is declared on the residual max norm.
    """
    u = u0.copy()
    res = residual(u)
    rnorm = float(np.max(np.abs(res)))
    iterations = 0
    while rnorm > tol and iterations < max_iter:
        J = jacobian(u)
        du = _solve_spd(J, -res)
        e0 = energy(u)
        slope = float(res @ du)
        accepted = False
        step = 1.0
        while step >= 2.0 ** -40:
            trial = u + step * du
            trial_energy = energy(trial)
            if slope < 0 and trial_energy <= e0 + 1e-4 * step * slope:
                u = trial
                res = residual(u)
                rnorm = float(np.max(np.abs(res)))
                accepted = True
                break
            # near the minimum the energy decrement drowns in rounding; only
            # there is a plain residual decrease accepted instead
            if abs(trial_energy - e0) <= 1e-12 * (1.0 + abs(e0)):
                trial_res = residual(trial)
                trial_norm = float(np.max(np.abs(trial_res)))
                if (trial_norm <= rnorm * (1.0 - 1e-4 * step)
                        or trial_norm <= tol):
                    u, res, rnorm = trial, trial_res, trial_norm
                    accepted = True
                    break
            step *= 0.5
        iterations += 1
        if not accepted:
            return u, iterations, rnorm, False
    return u, iterations, rnorm, rnorm <= tol


def _ordering_defect(values: np.ndarray) -> float:
    if values.shape[0] == 1:
        return 0.0
    return float(np.max(np.maximum(values[1:] - values[:-1], 0.0)))


def step_penalized(state: EvolutionState, dt: float, f_fields: MultiField,
                   params: PenaltyParams, pflux: PFluxParams, tol: float,
                   max_iter: int = MAX_NEWTON_ITERATIONS) -> EvolutionState:
    """One implicit step of the penalized system; raises SolverFailure on stall."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not tol > 0:
        raise ValueError("tol must be positive")
    grid = state.u.grid
    if f_fields.grid != grid or params.grid != grid:
        raise ValueError("state, sources and penalty weights must share one grid")
    n_comp = state.u.n_components
    if f_fields.n_components != n_comp or params.n_components != n_comp:
        raise ValueError("component counts do not match")

    n = grid.n_nodes
    u_old = state.u.stack()
    f = f_fields.stack()
    xi = params.xi_values()
    eps = params.epsilon

    def residual(flat: np.ndarray) -> np.ndarray:
        u = flat.reshape(n_comp, n)
        out = (u - u_old) / dt - f
        for i in range(n_comp):
            out[i] += apply_p_laplacian(ScalarField(grid, u[i]), pflux).values
        for i in range(n_comp - 1):
            act = xi[i + 1] * theta_eps_array(u[i] - u[i + 1], eps)
            out[i] += act
            out[i + 1] -= act
        return out.ravel()

    def jacobian(flat: np.ndarray) -> sp.csr_matrix:
        u = flat.reshape(n_comp, n)
        blocks = [linearize_p_laplacian(ScalarField(grid, u[i]), pflux)
                  + sp.identity(n) / dt
                  for i in range(n_comp)]
        J = sp.block_diag(blocks, format="csr")
        if n_comp > 1:
            rows, cols, data = [], [], []
            for i in range(n_comp - 1):
                slope = xi[i + 1] * theta_eps_derivative_array(u[i] - u[i + 1],
                                                               eps)
                top = np.arange(i * n, (i + 1) * n)
                bottom = top + n
                rows += [top, top, bottom, bottom]
                cols += [top, bottom, top, bottom]
                data += [slope, -slope, -slope, slope]
            coupling = sp.csr_matrix(
                (np.concatenate(data),
                 (np.concatenate(rows), np.concatenate(cols))),
                shape=J.shape)
            J = J + coupling
        return J.tocsr()

    def energy(flat: np.ndarray) -> float:
        u = flat.reshape(n_comp, n)
        total = float(np.sum((u - u_old) ** 2)) / (2.0 * dt) \
            - float(np.sum(f * u))
        for i in range(n_comp):
            total += edge_energy(u[i], grid, pflux)
        for i in range(n_comp - 1):
            total += float(np.sum(
                xi[i + 1] * theta_eps_antiderivative_array(u[i] - u[i + 1],
                                                           eps)))
        return total

    sol, iterations, rnorm, ok = _damped_newton(
        u_old.ravel(), residual, jacobian, energy, tol, max_iter)
    u_new = sol.reshape(n_comp, n)
    report = SolveReport(iterations, rnorm, _ordering_defect(u_new), ok)
    if not ok:
        raise SolverFailure("penalized step did not converge", report,
                            state.t + dt)
    return EvolutionState(state.t + dt, MultiField.from_stack(grid, u_new),
                          state.step_index + 1, report)


def step_double_obstacle(w: ScalarField, psi1: ScalarField | None,
                         psi2: ScalarField | None, phi: ScalarField,
                         dt: float, epsilon: float, pflux: PFluxParams,
                         tol: float = 1e-9,
                         max_iter: int = MAX_NEWTON_ITERATIONS) -> ScalarField:
    """Penalized implicit step between obstacles psi2 <= w <= psi1.

    The obstacle reactions are weighted by zeta_1 = (P psi1 - phi)^- and
    zeta_2 = (P psi2 - phi)^+; a missing obstacle (None) removes its term.
    The result satisfies psi2 - eps <= w <= psi1 + eps up to solver
    tolerance.
    """
    grid = w.grid
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    if psi1 is not None and psi2 is not None:
        both = np.all(psi1.values >= psi2.values)
        if not both:
            raise ValueError("upper obstacle must dominate the lower one")

    def reaction_weight(psi: ScalarField | None, sign: str) -> np.ndarray | None:
        if psi is None:
            return None
        p_psi = discrete_P(psi, psi, dt, pflux).values
        if sign == "upper":
            return np.maximum(phi.values - p_psi, 0.0)  # (P psi1 - phi)^-
        return np.maximum(p_psi - phi.values, 0.0)      # (P psi2 - phi)^+

    zeta1 = reaction_weight(psi1, "upper")
    zeta2 = reaction_weight(psi2, "lower")
    w_old = w.values

    def residual(u: np.ndarray) -> np.ndarray:
        out = (u - w_old) / dt - phi.values
        out += apply_p_laplacian(ScalarField(grid, u), pflux).values
        if zeta2 is not None:
            out += zeta2 * theta_eps_array(u - psi2.values, epsilon)
        if zeta1 is not None:
            out -= zeta1 * theta_eps_array(psi1.values - u, epsilon)
        return out

    def jacobian(u: np.ndarray) -> sp.csr_matrix:
        J = linearize_p_laplacian(ScalarField(grid, u), pflux) \
            + sp.identity(grid.n_nodes) / dt
        diag = np.zeros(grid.n_nodes)
        if zeta2 is not None:
            diag += zeta2 * theta_eps_derivative_array(u - psi2.values, epsilon)
        if zeta1 is not None:
            diag += zeta1 * theta_eps_derivative_array(psi1.values - u, epsilon)
        return (J + sp.diags(diag)).tocsr()

    def energy(u: np.ndarray) -> float:
        total = edge_energy(u, grid, pflux)
        total += float(np.sum((u - w_old) ** 2)) / (2.0 * dt)
        total -= float(np.sum(phi.values * u))
        if zeta2 is not None:
            total += float(np.sum(zeta2 * theta_eps_antiderivative_array(
                u - psi2.values, epsilon)))
        if zeta1 is not None:
            total += float(np.sum(zeta1 * theta_eps_antiderivative_array(
                psi1.values - u, epsilon)))
        return total

    sol, iterations, rnorm, ok = _damped_newton(w_old, residual, jacobian,
                                                energy, tol, max_iter)
    if not ok:
        report = SolveReport(iterations, rnorm, 0.0, False)
        raise SolverFailure("double-obstacle step did not converge", report, dt)
    return ScalarField(grid, sol)


def _ls_violation(u_new: np.ndarray, u_old: np.ndarray, dt: float,
                  f: np.ndarray, grid, pflux: PFluxParams) -> float:
    """Raw max pointwise violation of the lattice bounds for one step."""
    n_comp = u_new.shape[0]
    lower = np.minimum.accumulate(f, axis=0)
    upper = np.maximum.accumulate(f[::-1], axis=0)[::-1]
    worst = 0.0
    for i in range(n_comp):
        pu = discrete_P(ScalarField(grid, u_new[i]), ScalarField(grid, u_old[i]),
                        dt, pflux).values
        viol = np.maximum(lower[i] - pu, pu - upper[i])
        worst = max(worst, float(np.max(viol)))
    return max(worst, 0.0)


def solve_evolution(config: ProblemConfig, record_trajectory: bool = False,
                    stationary_reference: MultiField | None = None
                    ) -> EvolutionResult:
    """March the penalized system to t_final, accumulating diagnostics.

    The time series tracks, per step: component L2 norms, p-gradient
    seminorms, the ordering defect, the raw lattice-bound violation of the
    step, and the area of each adjacent coincidence mask.  When a
    stationary reference state is supplied (asymptotic studies) the L2
    distance to it and the per-pair mask distances are tracked as well.

    A step that stalls is retried once as two half steps before the
    failure propagates with the failing time.
    """
    grid = config.grid
    n_comp = config.n_membranes
    pflux = config.pflux
    u0, warnings = initial_state(config)
    base, trans, lam = config.source_arrays()

    def f_stack(t: float) -> np.ndarray:
        return base + trans * np.exp(-lam * t)[:, None]

    columns = (["t"]
               + [f"l2_u_{i + 1}" for i in range(n_comp)]
               + [f"gradp_u_{i + 1}" for i in range(n_comp)]
               + ["ordering_defect", "ls_violation"]
               + [f"area_chi_{i + 1}_{i + 2}" for i in range(n_comp - 1)])
    ref_masks = None
    if stationary_reference is not None:
        columns.append("distance_to_stationary")
        ref_masks = analysis.coincidence_masks(stationary_reference, config.tol_c)
        columns += [f"dist_chi_{i + 1}_{i + 2}" for i in range(n_comp - 1)]
    series = TimeSeries(columns)

    def record(state: EvolutionState, ls_violation: float):
        u = state.u
        row = [state.t]
        row += [l2_norm(c) for c in u.components]
        row += [lp_grad_norm(c, config.p) for c in u.components]
        row.append(_ordering_defect(u.stack()))
        row.append(ls_violation)
        masks = analysis.coincidence_masks(u, config.tol_c)
        row += [masks.area(i + 1, i + 2) for i in range(n_comp - 1)]
        if stationary_reference is not None:
            d2 = sum(l2_norm(ScalarField(grid, a.values - b.values)) ** 2
                     for a, b in zip(u.components,
                                     stationary_reference.components))
            row.append(math.sqrt(d2))
            dist = analysis.mask_distance(masks, ref_masks)
            row += [dist[(i + 1, i + 2)] for i in range(n_comp - 1)]
        series.append(row)

    state = EvolutionState(0.0, u0, 0, None)
    record(state, 0.0)
    trajectory = [state] if record_trajectory else None

    n_steps = config.n_steps
    if abs(n_steps * config.dt - config.t_final) > 1e-9 * max(1.0, config.t_final):
        warnings.append(
            f"t_final is not a multiple of dt; marching {n_steps} steps to "
            f"t = {n_steps * config.dt:g}")
    snapshot_steps = sorted({min(n_steps, max(0, round(s / config.dt)))
                             for s in config.snapshot_times})
    snapshots = [state] if 0 in snapshot_steps else []

    for m in range(1, n_steps + 1):
        t_new = m * config.dt
        f_new = f_stack(t_new)
        params = PenaltyParams(
            config.epsilon,
            tuple(ScalarField(grid, row) for row in xi_stack(f_new)))
        f_field = MultiField.from_stack(grid, f_new)
        u_prev = state.u.stack()
        try:
            state_new = step_penalized(state, config.dt, f_field, params,
                                       pflux, config.newton_tol)
        except SolverFailure:
            # one retry as two half steps on the same schedule
            half = config.dt / 2.0
            t_mid = t_new - half
            f_mid = f_stack(t_mid)
            params_mid = PenaltyParams(
                config.epsilon,
                tuple(ScalarField(grid, row) for row in xi_stack(f_mid)))
            mid = step_penalized(state, half,
                                 MultiField.from_stack(grid, f_mid),
                                 params_mid, pflux, config.newton_tol)
            state_new = step_penalized(mid, half, f_field, params, pflux,
                                       config.newton_tol)
            state_new = EvolutionState(t_new, state_new.u, m,
                                       state_new.last_report)
        state = EvolutionState(t_new, state_new.u, m, state_new.last_report)
        ls = _ls_violation(state.u.stack(), u_prev, config.dt, f_new, grid,
                           pflux)
        record(state, ls)
        if record_trajectory:
            trajectory.append(state)
        if m in snapshot_steps:
            snapshots.append(state)

    return EvolutionResult(state, snapshots, series, trajectory, warnings)
