"""Periodic space-time lattice, scalar fields on it, and discrete difference stencils.

The spatial domain is a d-dimensional torus: axis i carries ``cells[i]`` points
at uniform spacing ``h``, so the box length along that axis is ``cells[i] * h``
and every stencil wraps periodically.  Time is sampled at the K + 1 uniform
levels 0, tau, ..., T.  Fields are immutable once built and all operators are
pure reads, so everything here may be shared freely across threads.

Sign convention for one-sided differences: for a signed axis j in
{+-1, ..., +-d} the difference is (phi(x + s*h*e_i) - phi(x)) / (s*h) with
i = |j| and s = sign(j).  Both j = +i and j = -i therefore approximate the
same directional derivative d(phi)/dx_i, and

    second_diff_i  = (D_{+i} - D_{-i}) / h,
    grad_i (central) = (D_{+i} + D_{-i}) / 2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

__all__ = [
    "GridError",
    "Grid",
    "Field",
    "SpaceTimeField",
    "central_gradient",
    "one_sided_diff",
    "second_diff",
    "discrete_time_diff",
    "central_gradient_array",
    "one_sided_diff_array",
    "second_diff_array",
]


class GridError(ValueError):
    """Invalid lattice geometry, or an operation mixing mismatched grids."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice with spatial step h and time step tau.

    ``cells[i] >= 3`` keeps the three-point stencils well defined under the
    periodic wrap, and T/tau must be a whole number of steps (up to one
    representable rounding of tau).
    """

    d: int
    h: float
    tau: float
    T: float
    cells: tuple[int, ...]

    def __post_init__(self):
        if self.d not in (1, 2, 3):
            raise GridError(f"spatial dimension must be 1, 2 or 3, got {self.d}")
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "T", float(self.T))
        if not 0.0 < self.h < 1.0:
            raise GridError(f"h must lie in (0, 1), got {self.h}")
        if not 0.0 < self.tau < 1.0:
            raise GridError(f"tau must lie in (0, 1), got {self.tau}")
        if self.T <= 0.0:
            raise GridError(f"T must be positive, got {self.T}")
        cells = tuple(int(n) for n in np.atleast_1d(np.asarray(self.cells)))
        object.__setattr__(self, "cells", cells)
        if len(cells) != self.d:
            raise GridError(f"need {self.d} per-axis cell counts, got {cells}")
        if any(n < 3 for n in cells):
            raise GridError(f"every axis needs at least 3 cells, got {cells}")
        k = round(self.T / self.tau)
        if k < 1 or abs(k * self.tau - self.T) > 1e-9 * max(self.T, 1.0):
            raise GridError(
                f"T/tau must be a positive integer: T={self.T!r}, tau={self.tau!r}"
            )

    @property
    def K(self) -> int:
        """Number of time steps; there are K + 1 time levels."""
        return round(self.T / self.tau)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.cells))

    @property
    def lengths(self) -> tuple[float, ...]:
        """Box length per axis."""
        return tuple(n * self.h for n in self.cells)

    @cached_property
    def times(self) -> np.ndarray:
        """The K + 1 time levels 0, tau, ..., T (terminal level pinned to T)."""
        out = np.arange(self.K + 1, dtype=np.float64) * self.tau
        out[-1] = self.T
        out.setflags(write=False)
        return out

    @cached_property
    def points_flat(self) -> np.ndarray:
        """Lattice coordinates, shape (n_cells, d), in row-major cell order."""
        axes = [np.arange(n, dtype=np.float64) * self.h for n in self.cells]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([m.reshape(-1) for m in mesh], axis=-1)
        pts.setflags(write=False)
        return pts

    def check_cell(self, cell) -> tuple[int, ...]:
        """Validate a multi-index (an int is accepted in 1D); raises IndexError."""
        if np.isscalar(cell):
            cell = (cell,)
        cell = tuple(int(c) for c in cell)
        if len(cell) != self.d:
            raise IndexError(f"cell index {cell} does not match dimension {self.d}")
        for c, n in zip(cell, self.cells):
            if not 0 <= c < n:
                raise IndexError(f"cell index {cell} out of range for cells {self.cells}")
        return cell


@dataclass(frozen=True, eq=False)
class Field:
    """Real values on one time level of the spatial lattice (immutable)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != self.grid.cells:
            if vals.ndim == 1 and vals.size == self.grid.n_cells:
                vals = vals.reshape(self.grid.cells)
            else:
                raise GridError(
                    f"field shape {vals.shape} does not match grid cells {self.grid.cells}"
                )
        if not np.isfinite(vals).all():
            raise GridError("field values must all be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "Field":
        return cls(grid, np.full(grid.cells, float(value)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "Field":
        """Sample ``fn`` (taking an (n, d) array of points) on the lattice."""
        return cls(grid, np.asarray(fn(grid.points_flat), dtype=np.float64))

    @property
    def flat(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """One field per time level; level k sits at time ``grid.times[k]``."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        want = (self.grid.K + 1,) + self.grid.cells
        if vals.shape != want:
            raise GridError(f"space-time shape {vals.shape} does not match {want}")
        if not np.isfinite(vals).all():
            raise GridError("space-time field values must all be finite")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @property
    def n_levels(self) -> int:
        return self.grid.K + 1

    def level(self, k: int) -> Field:
        return Field(self.grid, self.values[k])

    def time(self, k: int) -> float:
        return float(self.grid.times[k])


def _neighbor(values: np.ndarray, axis: int, step: int) -> np.ndarray:
    # np.roll(v, -step) places the value at cell + step*e_axis at each cell
    return np.roll(values, -step, axis=axis)


def central_gradient_array(values: np.ndarray, h: float) -> np.ndarray:
    """Central-difference gradient with periodic wrap, shape (d,) + values.shape."""
    return np.stack(
        [
            (_neighbor(values, i, +1) - _neighbor(values, i, -1)) / (2.0 * h)
            for i in range(values.ndim)
        ]
    )


def one_sided_diff_array(values: np.ndarray, h: float, j: int) -> np.ndarray:
    """One-sided difference along signed axis j: (v(x + s*h*e_i) - v(x)) / (s*h)."""
    axis, sign = _signed_axis(j, values.ndim)
    return (_neighbor(values, axis, sign) - values) / (sign * h)


def second_diff_array(values: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Three-point second difference along ``axis`` (0-based) with periodic wrap."""
    return (
        _neighbor(values, axis, +1) - 2.0 * values + _neighbor(values, axis, -1)
    ) / (h * h)


def _signed_axis(j: int, d: int) -> tuple[int, int]:
    j = int(j)
    if j == 0 or abs(j) > d:
        raise IndexError(f"signed axis must lie in +-1..+-{d}, got {j}")
    return abs(j) - 1, (1 if j > 0 else -1)


def central_gradient(field: Field, cell) -> np.ndarray:
    """Central gradient at one cell: component i is (v(x+h e_i) - v(x-h e_i)) / 2h."""
    grid = field.grid
    cell = grid.check_cell(cell)
    v = field.values
    out = np.empty(grid.d)
    for i in range(grid.d):
        up = list(cell)
        dn = list(cell)
        up[i] = (cell[i] + 1) % grid.cells[i]
        dn[i] = (cell[i] - 1) % grid.cells[i]
        out[i] = (v[tuple(up)] - v[tuple(dn)]) / (2.0 * grid.h)
    return out


def one_sided_diff(field: Field, cell, j: int) -> float:
    """One-sided difference at one cell along signed axis j in {+-1..+-d}."""
    grid = field.grid
    cell = grid.check_cell(cell)
    axis, sign = _signed_axis(j, grid.d)
    nb = list(cell)
    nb[axis] = (cell[axis] + sign) % grid.cells[axis]
    return float(
        (field.values[tuple(nb)] - field.values[cell]) / (sign * grid.h)
    )


def second_diff(field: Field, cell, axis: int) -> float:
    """Second difference at one cell along ``axis`` (0-based)."""
    grid = field.grid
    cell = grid.check_cell(cell)
    if not 0 <= axis < grid.d:
        raise IndexError(f"axis must lie in 0..{grid.d - 1}, got {axis}")
    up = list(cell)
    dn = list(cell)
    up[axis] = (cell[axis] + 1) % grid.cells[axis]
    dn[axis] = (cell[axis] - 1) % grid.cells[axis]
    v = field.values
    return float(
        (v[tuple(up)] - 2.0 * v[cell] + v[tuple(dn)]) / (grid.h * grid.h)
    )


def discrete_time_diff(current: Field, previous: Field) -> Field:
    """Backward time difference (current - previous) / tau, cellwise."""
    if current.grid != previous.grid:
        raise GridError("discrete_time_diff requires both fields on the same grid")
    return Field(
        current.grid, (current.values - previous.values) / current.grid.tau
    )
