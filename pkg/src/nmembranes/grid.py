"""Uniform rectangular grids, nodal fields, and the ordered-cone projection.

All fields live on the interior nodes of a uniform grid over a rectangle
(interval in 1D), with homogeneous Dirichlet values imposed through ghost
nodes fixed at zero.  Interior nodes are enumerated row-major (y outer,
x inner in 2D).  Everything here is value-like and pure: operations never
mutate their inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "GridSpec",
    "ScalarField",
    "MultiField",
    "make_grid",
    "project_ordered",
    "project_columns",
    "l2_norm",
    "lp_grad_norm",
]


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid on (0, length_x) or (0, length_x) x (0, length_y).

    ``n_x`` (and ``n_y`` in 2D) count interior nodes only; the spacing is
    ``length / (n + 1)`` so that boundary nodes sit on the domain edge and
    carry the implicit Dirichlet value 0.
    """

    dimension: int
    n_x: int
    length_x: float = 1.0
    n_y: int | None = None
    length_y: float | None = None

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.n_x < 2:
            raise ValueError(f"n_x must be >= 2, got {self.n_x}")
        if not (self.length_x > 0):
            raise ValueError(f"length_x must be positive, got {self.length_x}")
        if self.dimension == 2:
            if self.n_y is None or self.length_y is None:
                raise ValueError("2D grid requires n_y and length_y")
            if self.n_y < 2:
                raise ValueError(f"n_y must be >= 2, got {self.n_y}")
            if not (self.length_y > 0):
                raise ValueError(f"length_y must be positive, got {self.length_y}")
        else:
            if self.n_y is not None or self.length_y is not None:
                raise ValueError("1D grid must not set n_y or length_y")

    @property
    def h_x(self) -> float:
        return self.length_x / (self.n_x + 1)

    @property
    def h_y(self) -> float:
        if self.dimension == 1:
            raise AttributeError("h_y undefined for a 1D grid")
        return self.length_y / (self.n_y + 1)

    @property
    def n_nodes(self) -> int:
        return self.n_x if self.dimension == 1 else self.n_x * self.n_y

    @property
    def cell_measure(self) -> float:
        """Measure of the cell owned by one interior node."""
        return self.h_x if self.dimension == 1 else self.h_x * self.h_y

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n_x,) if self.dimension == 1 else (self.n_y, self.n_x)

    def coordinates(self) -> tuple[np.ndarray, ...]:
        """Interior node coordinates, row-major; returns (x,) or (x, y)."""
        x1 = (np.arange(1, self.n_x + 1)) * self.h_x
        if self.dimension == 1:
            return (x1,)
        y1 = (np.arange(1, self.n_y + 1)) * self.h_y
        yy, xx = np.meshgrid(y1, x1, indexing="ij")
        return xx.ravel(), yy.ravel()


def make_grid(dimension: int, n_x: int, length_x: float = 1.0,
              n_y: int | None = None, length_y: float | None = None) -> GridSpec:
    """Build and validate a GridSpec (spacings are derived properties)."""
    return GridSpec(dimension, n_x, length_x, n_y, length_y)


@dataclass(frozen=True)
class ScalarField:
    """Nodal float64 values over the interior nodes of ``grid``."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has {v.shape} values, grid has {self.grid.n_nodes} nodes")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)

    @staticmethod
    def zeros(grid: GridSpec) -> "ScalarField":
        return ScalarField(grid, np.zeros(grid.n_nodes))


@dataclass(frozen=True)
class MultiField:
    """Ordered list of N component fields sharing one grid.

    The descending order constraint between components is enforced by the
    solvers, not by this container.
    """

    components: tuple[ScalarField, ...]

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) < 1:
            raise ValueError("MultiField needs at least one component")
        g = comps[0].grid
        for c in comps[1:]:
            if c.grid != g:
                raise ValueError("all components must share one grid")
        object.__setattr__(self, "components", comps)

    @property
    def grid(self) -> GridSpec:
        return self.components[0].grid

    @property
    def n_components(self) -> int:
        return len(self.components)

    def stack(self) -> np.ndarray:
        """Copy component values into an (N, n_nodes) array."""
        return np.stack([c.values for c in self.components])

    @staticmethod
    def from_stack(grid: GridSpec, values: np.ndarray) -> "MultiField":
        values = np.asarray(values, dtype=np.float64)
        return MultiField(tuple(ScalarField(grid, row.copy()) for row in values))

    @staticmethod
    def zeros(grid: GridSpec, n: int) -> "MultiField":
        return MultiField(tuple(ScalarField.zeros(grid) for _ in range(n)))


def project_ordered(values: Sequence[float]) -> tuple[float, ...]:
    """Euclidean projection of a tuple onto the cone v_1 >= ... >= v_N.

    Pool-adjacent-violators on the descending chain: scan left to right,
    merging adjacent blocks whenever an earlier block mean falls below a
    later one.  The output is nonincreasing exactly (each entry is a block
    mean, and adjacent block means satisfy >= by the merge loop condition),
    idempotent, and non-expansive; block means equal the means of the
    pooled input entries.
    """
    n = len(values)
    if n == 1:
        return (float(values[0]),)
    # (mean, count) per block
    means = [0.0] * n
    counts = [0] * n
    top = -1
    for v in values:
        top += 1
        means[top] = float(v)
        counts[top] = 1
        while top > 0 and means[top - 1] < means[top]:
            tot = counts[top - 1] + counts[top]
            means[top - 1] = (counts[top - 1] * means[top - 1]
                              + counts[top] * means[top]) / tot
            counts[top - 1] = tot
            top -= 1
    out = []
    for b in range(top + 1):
        out.extend([means[b]] * counts[b])
    return tuple(out)


def project_columns(values: np.ndarray) -> np.ndarray:
    """Apply project_ordered down each column of an (N, n_nodes) array."""
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    for j in range(values.shape[1]):
        out[:, j] = project_ordered(values[:, j])
    return out


def l2_norm(f: ScalarField) -> float:
    """Discrete L2 norm: nodal quadrature with one cell per interior node."""
    return float(np.sqrt(np.sum(f.values ** 2) * f.grid.cell_measure))


def _edge_differences(f: ScalarField) -> list[tuple[np.ndarray, float]]:
    """Per-axis edge gradients (ghost zeros on the boundary) and spacings."""
    g = f.grid
    if g.dimension == 1:
        padded = np.concatenate(([0.0], f.values, [0.0]))
        return [(np.diff(padded) / g.h_x, g.h_x)]
    v = f.values.reshape(g.shape)
    padx = np.pad(v, ((0, 0), (1, 1)))
    pady = np.pad(v, ((1, 1), (0, 0)))
    gx = np.diff(padx, axis=1) / g.h_x
    gy = np.diff(pady, axis=0) / g.h_y
    return [(gx, g.h_x), (gy, g.h_y)]


def lp_grad_norm(f: ScalarField, p: float) -> float:
    """Discrete (integral |grad u|^p)^(1/p) by per-edge differences.

    Each edge carries the cell measure; in 2D the x- and y-edge families
    contribute their own difference quotients, which reproduces the exact
    five-point Dirichlet energy at p = 2.
    """
    if not p > 1:
        raise ValueError(f"p must exceed 1, got {p}")
    total = 0.0
    for grads, _h in _edge_differences(f):
        total += float(np.sum(np.abs(grads) ** p)) * f.grid.cell_measure
    return total ** (1.0 / p)
