"""Coincidence sets, reaction reconstruction, and structural verification.

Adjacent coincidence masks come from thresholding component gaps; masks of
wider ranges are conjunctions of the adjacent ones, so the product identity
between characteristic functions holds by construction.  The reaction
coefficients use prefix averages of the source tuple and are written with
plain arithmetic so that exact rational inputs (``fractions.Fraction``)
flow through unchanged.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .grid import GridSpec, MultiField, ScalarField
from .plap import PFluxParams, discrete_P

__all__ = [
    "CoincidenceMaskSet",
    "coincidence_masks",
    "average_f",
    "b_coefficient",
    "reconstruct_reaction",
    "ls_bounds",
    "ls_bound_stacks",
    "VerifyReport",
    "verify_ls",
    "NondegeneracyReport",
    "nondegeneracy_check",
    "mask_distance",
    "ContactReport",
    "contact_condition_check",
]


@dataclass(frozen=True)
class CoincidenceMaskSet:
    """Boolean coincidence indicators for every component range j..k."""

    grid: GridSpec
    n_components: int
    tol_c: float
    masks: dict[tuple[int, int], np.ndarray]

    def mask(self, j: int, k: int) -> np.ndarray:
        return self.masks[(j, k)]

    def area(self, j: int, k: int) -> float:
        return float(np.count_nonzero(self.masks[(j, k)])) * self.grid.cell_measure

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return sorted(self.masks.keys())

    @property
    def adjacent_pairs(self) -> list[tuple[int, int]]:
        return [(i, i + 1) for i in range(1, self.n_components)]


def coincidence_masks(u: MultiField, tol_c: float) -> CoincidenceMaskSet:
    """Detect where consecutive components agree within tol_c.

    The mask of a non-adjacent range (j, k) is the conjunction of the
    adjacent masks j..j+1, ..., k-1..k.
    """
    if tol_c < 0:
        raise ValueError("tol_c must be >= 0")
    values = u.stack()
    n_comp = u.n_components
    masks: dict[tuple[int, int], np.ndarray] = {}
    for i in range(1, n_comp):
        masks[(i, i + 1)] = np.abs(values[i - 1] - values[i]) <= tol_c
    for span in range(2, n_comp):
        for j in range(1, n_comp - span + 1):
            k = j + span
            masks[(j, k)] = masks[(j, k - 1)] & masks[(k - 1, k)]
    return CoincidenceMaskSet(u.grid, n_comp, tol_c, masks)


def average_f(f_point: Sequence, j: int, k: int):
    """Mean of components j..k (1-based, inclusive) of one source tuple."""
    n = len(f_point)
    if not (1 <= j <= k <= n):
        raise IndexError(f"need 1 <= j <= k <= {n}, got j={j}, k={k}")
    return sum(f_point[j - 1:k], f_point[j - 1] * 0) / (k - j + 1)


def b_coefficient(f_point: Sequence, i: int, j: int, k: int):
    """Reaction coefficient of component i on the coincidence range (j, k).

    End components pick up the averaging increment of extending the range;
    interior components see the scaled mismatch between the inner average
    and the endpoint mean.  The coefficients over any range sum to zero.
    """
    n = len(f_point)
    if not (1 <= j < k <= n):
        raise IndexError(f"need 1 <= j < k <= {n}, got j={j}, k={k}")
    if not (j <= i <= k):
        raise IndexError(f"need j <= i <= k, got i={i}")
    if i == j:
        return average_f(f_point, j, k) - average_f(f_point, j, k - 1)
    if i == k:
        return average_f(f_point, j, k) - average_f(f_point, j + 1, k)
    inner = average_f(f_point, j + 1, k - 1)
    return 2 * (inner - (f_point[j - 1] + f_point[k - 1]) / 2) \
        / ((k - j) * (k - j + 1))


def _average_stack(f: np.ndarray, j: int, k: int) -> np.ndarray:
    prefix = np.cumsum(f, axis=0)
    top = prefix[k - 1]
    bottom = prefix[j - 2] if j >= 2 else 0.0
    return (top - bottom) / (k - j + 1)


def _b_stack(f: np.ndarray, i: int, j: int, k: int) -> np.ndarray:
    if i == j:
        return _average_stack(f, j, k) - _average_stack(f, j, k - 1)
    if i == k:
        return _average_stack(f, j, k) - _average_stack(f, j + 1, k)
    inner = _average_stack(f, j + 1, k - 1)
    return 2.0 * (inner - 0.5 * (f[j - 1] + f[k - 1])) / ((k - j) * (k - j + 1))


def reconstruct_reaction(f_fields: MultiField,
                         masks: CoincidenceMaskSet) -> MultiField:
    """Reaction term R with Pu = f + R on the detected coincidence pattern."""
    if f_fields.grid != masks.grid:
        raise ValueError("sources and masks must share one grid")
    if f_fields.n_components != masks.n_components:
        raise ValueError("component count mismatch")
    f = f_fields.stack()
    n_comp = f.shape[0]
    out = np.zeros_like(f)
    for j in range(1, n_comp):
        for k in range(j + 1, n_comp + 1):
            chi = masks.mask(j, k).astype(float)
            for i in range(j, k + 1):
                out[i - 1] += _b_stack(f, i, j, k) * chi
    return MultiField.from_stack(f_fields.grid, out)


def ls_bounds(f_point: Sequence, i: int):
    """Lattice bounds for the operator on component i: (min prefix, max suffix)."""
    n = len(f_point)
    if not (1 <= i <= n):
        raise IndexError(f"need 1 <= i <= {n}, got {i}")
    return min(f_point[:i]), max(f_point[i - 1:])


def ls_bound_stacks(f: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized lattice bounds for an (N, n_nodes) source stack."""
    lower = np.minimum.accumulate(f, axis=0)
    upper = np.maximum.accumulate(f[::-1], axis=0)[::-1]
    return lower, upper


@dataclass(frozen=True)
class VerifyReport:
    raw_violation: float
    slack: float
    violation_beyond_slack: float
    time: float
    component: int
    node: int
    steps_checked: int
    passed: bool


def verify_ls(u_traj: Sequence, f_fields, dt: float, pflux: PFluxParams,
              slack: float) -> VerifyReport:
    """Check the lattice bounds on the parabolic residual along a trajectory.

    ``u_traj`` is a sequence of states with ``t`` and ``u`` attributes
    (at least two); ``f_fields`` is a MultiField for autonomous sources or a
    callable t -> MultiField.  Reports the worst pointwise excursion beyond
    the bounds, where it happened, and whether it stays within ``slack``.
    """
    if len(u_traj) < 2:
        raise ValueError("need at least two states to evaluate the residual")
    f_at: Callable[[float], MultiField]
    if isinstance(f_fields, MultiField):
        f_at = lambda t: f_fields
    else:
        f_at = f_fields
    worst = -np.inf
    where = (0.0, 1, 0)
    steps = 0
    for prev, curr in zip(u_traj[:-1], u_traj[1:]):
        steps += 1
        f = f_at(curr.t).stack()
        lower, upper = ls_bound_stacks(f)
        for i in range(curr.u.n_components):
            pu = discrete_P(curr.u.components[i], prev.u.components[i], dt,
                            pflux).values
            viol = np.maximum(lower[i] - pu, pu - upper[i])
            node = int(np.argmax(viol))
            if viol[node] > worst:
                worst = float(viol[node])
                where = (curr.t, i + 1, node)
    raw = max(worst, 0.0)
    beyond = raw - slack
    return VerifyReport(raw, slack, beyond, where[0], where[1], where[2],
                        steps, beyond <= 0.0)


@dataclass(frozen=True)
class NondegeneracyReport:
    gap_tol: float
    measures: dict[tuple[int, int, int], float]
    passed: bool

    @property
    def failing(self) -> list[tuple[int, int, int]]:
        return sorted(t for t, m in self.measures.items() if m > 0)


def nondegeneracy_check(f_fields: MultiField,
                        gap_tol: float) -> NondegeneracyReport:
    """Measure where prefix averages collide: <f>_{i,j} vs <f>_{j+1,k}.

    For every triple i <= j < k the report carries the measure of the set
    where the two range averages agree within gap_tol; the check passes only
    when every measure is zero.  N = 1 passes vacuously.
    """
    if gap_tol < 0:
        raise ValueError("gap_tol must be >= 0")
    f = f_fields.stack()
    n_comp = f.shape[0]
    cell = f_fields.grid.cell_measure
    measures: dict[tuple[int, int, int], float] = {}
    for j in range(1, n_comp):
        for i in range(1, j + 1):
            for k in range(j + 1, n_comp + 1):
                gap = np.abs(_average_stack(f, i, j) - _average_stack(f, j + 1, k))
                measures[(i, j, k)] = float(np.count_nonzero(gap <= gap_tol)) * cell
    passed = all(m == 0.0 for m in measures.values())
    return NondegeneracyReport(gap_tol, measures, passed)


def mask_distance(a: CoincidenceMaskSet,
                  b: CoincidenceMaskSet) -> dict[tuple[int, int], float]:
    """Symmetric-difference measure per coincidence pair."""
    if a.grid != b.grid:
        raise ValueError("mask sets must share one grid")
    if a.n_components != b.n_components:
        raise ValueError("mask sets must describe the same components")
    cell = a.grid.cell_measure
    return {pair: float(np.count_nonzero(a.masks[pair] ^ b.masks[pair])) * cell
            for pair in a.pairs}


@dataclass(frozen=True)
class ContactReport:
    which: str
    contact_measure: float
    violation_measure: float
    contact_nodes: int
    violation_nodes: int
    passed: bool


def contact_condition_check(w: ScalarField, psi: ScalarField, phi: ScalarField,
                            which: str, dt: float, pflux: PFluxParams,
                            slack: float,
                            contact_tol: float = 1e-8) -> ContactReport:
    """Check the necessary contact inclusion against one obstacle.

    For the lower obstacle the contact set must sit inside {P psi >= phi};
    for the upper obstacle inside {P psi <= phi}.  Cells in contact that
    violate the inclusion by more than ``slack`` are counted and measured.
    """
    if which not in ("lower", "upper"):
        raise ValueError("which must be 'lower' or 'upper'")
    if w.grid != psi.grid or w.grid != phi.grid:
        raise ValueError("fields must share one grid")
    contact = np.abs(w.values - psi.values) <= contact_tol
    p_psi = discrete_P(psi, psi, dt, pflux).values
    if which == "lower":
        bad = contact & (p_psi < phi.values - slack)
    else:
        bad = contact & (p_psi > phi.values + slack)
    cell = w.grid.cell_measure
    return ContactReport(
        which,
        float(np.count_nonzero(contact)) * cell,
        float(np.count_nonzero(bad)) * cell,
        int(np.count_nonzero(contact)),
        int(np.count_nonzero(bad)),
        bool(not np.any(bad)),
    )
