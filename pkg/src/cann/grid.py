"""Structured Cartesian grids, cell-average fields and ghost-cell padding."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised for invalid grid, stencil, network or experiment settings."""


class EvaluationError(ArithmeticError):
    """Raised when a user function returns non-finite values."""


@dataclass(frozen=True)
class GridSpec:
    lo: tuple
    hi: tuple
    counts: tuple

    def __post_init__(self):
        if not (len(self.lo) == len(self.hi) == len(self.counts)):
            raise ConfigurationError("lo, hi and counts must have the same length")
        if len(self.counts) < 1:
            raise ConfigurationError("grid needs at least one axis")
        for k, (a, b, n) in enumerate(zip(self.lo, self.hi, self.counts)):
            if not a < b:
                raise ConfigurationError(f"degenerate axis {k}: lo={a} >= hi={b}")
            if int(n) != n or n < 3:
                raise ConfigurationError(f"axis {k} needs an integer count >= 3, got {n}")

    @property
    def dim(self) -> int:
        return len(self.counts)

    @property
    def dx(self) -> tuple:
        return tuple((b - a) / n for a, b, n in zip(self.lo, self.hi, self.counts))

    @property
    def cell_measure(self) -> float:
        return float(np.prod(self.dx))

    @property
    def size(self) -> int:
        return int(np.prod(self.counts))

    @property
    def shape(self) -> tuple:
        return tuple(int(n) for n in self.counts)

    def centers(self) -> np.ndarray:
        """Cell-center coordinates, shape ``(dim, size)`` in flat-index order."""
        axes = [a + (np.arange(n) + 0.5) * h for a, n, h in zip(self.lo, self.shape, self.dx)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh])

    def padded(self) -> "GridSpec":
        """The grid extended by one cell on every side."""
        lo = tuple(a - h for a, h in zip(self.lo, self.dx))
        hi = tuple(b + h for b, h in zip(self.hi, self.dx))
        return GridSpec(lo, hi, tuple(n + 2 for n in self.shape))


def build_grid(lo: Sequence[float], hi: Sequence[float], counts: Sequence[int]) -> GridSpec:
    return GridSpec(tuple(float(a) for a in lo), tuple(float(b) for b in hi),
                    tuple(int(n) for n in counts))


def flat_index(grid: GridSpec, multi_idx: Sequence[int]) -> int:
    """Row-major flat index (last axis fastest)."""
    if len(multi_idx) != grid.dim:
        raise IndexError(f"expected {grid.dim} indices, got {len(multi_idx)}")
    for k, (m, n) in enumerate(zip(multi_idx, grid.shape)):
        if not 0 <= m < n:
            raise IndexError(f"index {m} out of range [0, {n}) on axis {k}")
    return int(np.ravel_multi_index(tuple(int(m) for m in multi_idx), grid.shape))


def multi_index(grid: GridSpec, flat: int) -> tuple:
    if not 0 <= flat < grid.size:
        raise IndexError(f"flat index {flat} out of range [0, {grid.size})")
    return tuple(int(m) for m in np.unravel_index(int(flat), grid.shape))


@dataclass
class Field:
    grid: GridSpec
    values: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.values = np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        if self.values.size != self.grid.size:
            raise ConfigurationError(
                f"field has {self.values.size} values for a grid of {self.grid.size} cells")

    def as_array(self) -> np.ndarray:
        """Values reshaped to the grid shape (a view)."""
        return self.values.reshape(self.grid.shape)


@dataclass(frozen=True)
class BoundaryCondition:
    """Either periodic wrap-around or Dirichlet data ``extension(x, t)``.

    ``extension`` receives coordinates stacked on axis 0 and must be defined on
    the one-cell collar outside the domain.
    """

    kind: str = "periodic"
    extension: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ("periodic", "dirichlet"):
            raise ConfigurationError(f"unknown boundary condition kind {self.kind!r}")
        if self.kind == "dirichlet" and self.extension is None:
            raise ConfigurationError("Dirichlet boundary condition needs an extension function")

    @classmethod
    def periodic(cls) -> "BoundaryCondition":
        return cls("periodic")

    @classmethod
    def dirichlet(cls, extension: Callable) -> "BoundaryCondition":
        return cls("dirichlet", extension)


def _gauss_legendre(q: int):
    if q < 1:
        raise ConfigurationError(f"quadrature order must be >= 1, got {q}")
    return np.polynomial.legendre.leggauss(q)


def average_over_cells(f: Callable, centers: np.ndarray, dx: Sequence[float], q: int = 4) -> np.ndarray:
    """Tensor-product Gauss-Legendre cell averages of ``f`` around ``centers``.

    ``centers`` has shape ``(dim, n)``; ``f`` maps a ``(dim, ...)`` coordinate
    array to values of shape ``(...)``.
    """
    nodes, weights = _gauss_legendre(q)
    dim, n = centers.shape
    # reference nodes in [-1/2, 1/2] with weights summing to one per axis
    offs = np.meshgrid(*([0.5 * nodes] * dim), indexing="ij")
    wts = np.ones_like(offs[0])
    for w in np.meshgrid(*([0.5 * weights] * dim), indexing="ij"):
        wts = wts * w
    offs = [o.ravel() for o in offs]
    wts = wts.ravel()
    pts = np.stack([centers[k][:, None] + offs[k][None, :] * dx[k] for k in range(dim)])
    vals = np.asarray(f(pts), dtype=np.float64)
    vals = np.broadcast_to(vals, pts.shape[1:])
    avg = vals @ wts
    bad = ~np.isfinite(avg)
    if bad.any():
        m = int(np.flatnonzero(bad)[0])
        raise EvaluationError(f"non-finite value in cell centered at {tuple(centers[:, m])}")
    return avg


def cell_average(grid: GridSpec, f: Callable, q: int = 4, time: float = 0.0) -> Field:
    """Field of cell averages of ``f(x)`` on ``grid``."""
    return Field(grid, average_over_cells(f, grid.centers(), grid.dx, q), time)


def _ghost_mask(shape: tuple) -> np.ndarray:
    mask = np.ones(shape, dtype=bool)
    mask[tuple(slice(1, -1) for _ in shape)] = False
    return mask


def apply_ghost(field: Field, bc: BoundaryCondition, t: Optional[float] = None, q: int = 4) -> np.ndarray:
    """Return the field values padded by one ghost cell per side per axis.

    Corner ghosts are filled as well, so vertex-neighbor stencils are complete.
    Dirichlet ghosts are cell averages of ``bc.extension`` at time ``t``
    (defaults to ``field.time``).
    """
    t = field.time if t is None else t
    inner = field.as_array()
    if bc.kind == "periodic":
        return np.pad(inner, 1, mode="wrap")
    padded = np.pad(inner, 1, mode="constant")
    pgrid = field.grid.padded()
    mask = _ghost_mask(pgrid.shape)
    centers = pgrid.centers()[:, mask.ravel()]
    padded[mask] = average_over_cells(lambda x: bc.extension(x, t), centers, field.grid.dx, q)
    return padded
