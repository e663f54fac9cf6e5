"""Bounded penalization of the ordering constraint.

The scalar activation ``theta_eps`` ramps from -1 to 0 over the band
(-eps, 0); the nonnegative coefficients ``xi_i`` built from prefix means of
the source tuple weight each adjacent-pair activation; the resulting
reaction operator B vanishes on ordered states, telescopes to zero across
components, and is T-monotone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import GridSpec, MultiField, ScalarField

__all__ = [
    "PenaltyParams",
    "theta_eps",
    "theta_eps_array",
    "theta_eps_derivative_array",
    "xi_coefficients",
    "xi_stack",
    "penalty_params",
    "apply_B",
    "apply_B_stack",
    "t_monotone_pairing",
]


def theta_eps(s: float, epsilon: float) -> float:
    """Bounded penalty activation: -1 below -eps, s/eps on (-eps, 0), 0 above."""
    if not epsilon > 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if s >= 0:
        return 0.0
    if s <= -epsilon:
        return -1.0
    return s / epsilon


def theta_eps_array(s: np.ndarray, epsilon: float) -> np.ndarray:
    return np.clip(s / epsilon, -1.0, 0.0)


def theta_eps_derivative_array(s: np.ndarray, epsilon: float) -> np.ndarray:
    """A.e. derivative of theta_eps: 1/eps on the open ramp band, else 0."""
    return np.where((s > -epsilon) & (s < 0), 1.0 / epsilon, 0.0)


def theta_eps_antiderivative_array(s: np.ndarray, epsilon: float) -> np.ndarray:
    """Convex potential with theta_eps as derivative, zero on [0, inf)."""
    ramp = np.clip(s, -epsilon, 0.0)
    return ramp * ramp / (2.0 * epsilon) + np.maximum(-s - epsilon, 0.0)


def xi_coefficients(f_point: Sequence[float]) -> tuple[float, ...]:
    """Penalty weights (xi_0, ..., xi_N) from one source tuple.

    xi_0 is the largest prefix mean of f, and xi_i = i*xi_0 - (f_1+...+f_i).
    Evaluated as a max over prefix comparisons with the i-th term pinned to
    exactly zero, which keeps every xi_i >= 0 in floating point (the exact
    value is nonnegative because xi_0 dominates each prefix mean).
    """
    f = [float(v) for v in f_point]
    n = len(f)
    if n < 1:
        raise ValueError("need at least one component")
    prefix = np.cumsum(f)
    counts = np.arange(1, n + 1, dtype=float)
    means = prefix / counts
    xi0 = float(np.max(means))
    out = [xi0]
    for i in range(1, n + 1):
        best = 0.0  # the m = i comparison is exactly zero
        for m in range(1, n + 1):
            if m == i:
                continue
            best = max(best, float(i * means[m - 1] - prefix[i - 1]))
        out.append(best)
    return tuple(out)


def xi_stack(f_values: np.ndarray) -> np.ndarray:
    """Pointwise xi coefficients for an (N, n_nodes) source stack.

    Returns an (N+1, n_nodes) array; same pinned-diagonal evaluation as
    xi_coefficients so nonnegativity holds exactly.
    """
    f_values = np.asarray(f_values, dtype=np.float64)
    n_comp, n_nodes = f_values.shape
    prefix = np.cumsum(f_values, axis=0)
    means = prefix / np.arange(1, n_comp + 1, dtype=float)[:, None]
    out = np.empty((n_comp + 1, n_nodes))
    out[0] = np.max(means, axis=0)
    for i in range(1, n_comp + 1):
        terms = i * means - prefix[i - 1][None, :]
        terms[i - 1, :] = 0.0
        out[i] = np.max(np.maximum(terms, 0.0), axis=0)
    return out


@dataclass(frozen=True)
class PenaltyParams:
    """Penalization width and the N+1 nonnegative weight fields xi_0..xi_N."""

    epsilon: float
    xi: tuple[ScalarField, ...]

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        xi = tuple(self.xi)
        if len(xi) < 2:
            raise ValueError("xi must hold at least (xi_0, xi_1)")
        g = xi[0].grid
        for index, comp in enumerate(xi):
            if comp.grid != g:
                raise ValueError("xi fields must share one grid")
            # xi_0 is the (sign-free) max prefix mean kept for diagnostics;
            # the weights xi_1..xi_N must be nonnegative
            if index > 0 and np.any(comp.values < 0):
                raise ValueError(f"xi_{index} must be nonnegative")
        object.__setattr__(self, "xi", xi)

    @property
    def n_components(self) -> int:
        return len(self.xi) - 1

    @property
    def grid(self) -> GridSpec:
        return self.xi[0].grid

    def xi_values(self) -> np.ndarray:
        return np.stack([c.values for c in self.xi])


def penalty_params(f: MultiField, epsilon: float) -> PenaltyParams:
    """Build PenaltyParams with xi computed pointwise from the source fields."""
    xi = xi_stack(f.stack())
    return PenaltyParams(epsilon, tuple(ScalarField(f.grid, row) for row in xi))


def apply_B_stack(v: np.ndarray, xi: np.ndarray, epsilon: float) -> np.ndarray:
    """Penalty reaction on an (N, n) state stack with (N+1, n) weights.

    Component i gets xi_i*theta(v_i - v_{i+1}) - xi_{i-1}*theta(v_{i-1} - v_i);
    the virtual neighbors v_0 = +inf and v_{N+1} = -inf kill the boundary
    terms, so for N = 1 the reaction is identically zero.
    """
    n_comp = v.shape[0]
    out = np.zeros_like(v)
    for i in range(n_comp - 1):
        act = theta_eps_array(v[i] - v[i + 1], epsilon)
        out[i] += xi[i + 1] * act
        out[i + 1] -= xi[i + 1] * act
    return out


def apply_B(v: MultiField, params: PenaltyParams) -> MultiField:
    """Penalty reaction as a MultiField; vanishes wherever v is ordered."""
    if v.grid != params.grid:
        raise ValueError("state and penalty weights must share one grid")
    if v.n_components != params.n_components:
        raise ValueError(
            f"state has {v.n_components} components, xi describes "
            f"{params.n_components}")
    out = apply_B_stack(v.stack(), params.xi_values(), params.epsilon)
    return MultiField.from_stack(v.grid, out)


def t_monotone_pairing(v: MultiField, w: MultiField,
                       params: PenaltyParams) -> float:
    """Discrete pairing <Bv - Bw, (v - w)^+>; nonnegative up to rounding."""
    if v.grid != w.grid:
        raise ValueError("states must share one grid")
    bv = apply_B_stack(v.stack(), params.xi_values(), params.epsilon)
    bw = apply_B_stack(w.stack(), params.xi_values(), params.epsilon)
    pos = np.maximum(v.stack() - w.stack(), 0.0)
    return float(np.sum((bv - bw) * pos) * v.grid.cell_measure)
