"""Network input stencils and supervised learning-set assembly."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import BoundaryCondition, ConfigurationError, Field, apply_ghost

EDGE = "edge"
VERTEX = "vertex"


@dataclass(frozen=True)
class StencilSpec:
    """Neighbor set feeding the network.

    ``edge``: the 2d+1 face neighbors. In 2D the order is
    ``[(i-1,j), (i+1,j), (i,j), (i,j+1), (i,j-1)]``; in other dimensions axis 0
    contributes ``-1, +1``, then the center, then every further axis ``+1, -1``.

    ``vertex``: all 3**d cells sharing a vertex, in lexicographic order over
    offsets ``(-1, 0, +1)**d`` with the last axis fastest.
    """

    kind: str
    dim: int

    def __post_init__(self):
        if self.kind not in (EDGE, VERTEX):
            raise ConfigurationError(f"unknown stencil kind {self.kind!r}")
        if self.dim < 1:
            raise ConfigurationError("stencil dimension must be positive")

    @property
    def offsets(self) -> list:
        if self.kind == VERTEX:
            return list(itertools.product((-1, 0, 1), repeat=self.dim))

        def unit(k, s):
            o = [0] * self.dim
            o[k] = s
            return tuple(o)

        offs = [unit(0, -1), unit(0, 1), (0,) * self.dim]
        for k in range(1, self.dim):
            offs += [unit(k, 1), unit(k, -1)]
        return offs

    @property
    def width(self) -> int:
        return 3 ** self.dim if self.kind == VERTEX else 2 * self.dim + 1

    @property
    def center(self) -> int:
        return self.offsets.index((0,) * self.dim)


def input_width(kind: str, dim: int) -> int:
    return StencilSpec(kind, dim).width


def _check_dim(spec: StencilSpec, ndim: int):
    if spec.dim != ndim:
        raise ConfigurationError(f"stencil is {spec.dim}-D but the grid is {ndim}-D")


def build_input_vector(padded: np.ndarray, cell: Sequence[int], spec: StencilSpec) -> np.ndarray:
    _check_dim(spec, padded.ndim)
    base = np.asarray(cell) + 1
    for k, (b, n) in enumerate(zip(base, padded.shape)):
        if not 1 <= b <= n - 2:
            raise IndexError(f"cell index {b - 1} is not interior on axis {k}")
    return np.array([padded[tuple(base + np.asarray(o))] for o in spec.offsets])


def gather_inputs(padded: np.ndarray, spec: StencilSpec) -> np.ndarray:
    """Input vectors for every interior cell, shape ``(cells, width)`` in flat order."""
    _check_dim(spec, padded.ndim)
    shape = tuple(n - 2 for n in padded.shape)
    out = np.empty((int(np.prod(shape)), spec.width))
    for c, off in enumerate(spec.offsets):
        sl = tuple(slice(1 + o, 1 + o + n) for o, n in zip(off, shape))
        out[:, c] = padded[sl].ravel()
    return out


@dataclass
class LearningSet:
    inputs: np.ndarray
    targets: np.ndarray
    center_inputs: np.ndarray
    cell_ids: np.ndarray
    pair_count: int = 1

    def __post_init__(self):
        n = len(self.targets)
        if not (len(self.inputs) == len(self.center_inputs) == len(self.cell_ids) == n):
            raise ConfigurationError("learning-set arrays have inconsistent lengths")

    def __len__(self) -> int:
        return len(self.targets)

    def subset(self, idx: np.ndarray) -> "LearningSet":
        idx = np.sort(np.asarray(idx, dtype=np.int64))
        return LearningSet(self.inputs[idx], self.targets[idx], self.center_inputs[idx],
                           self.cell_ids[idx], self.pair_count)

    def sorted(self) -> "LearningSet":
        """Copy ordered by ascending cell id (stable across time-level pairs)."""
        order = np.argsort(self.cell_ids, kind="stable")
        return LearningSet(self.inputs[order], self.targets[order], self.center_inputs[order],
                           self.cell_ids[order], self.pair_count)


def assemble_pairs(field_n: Field, field_np1: Field, bc: BoundaryCondition, spec: StencilSpec) -> LearningSet:
    """One ``(stencil vector, next average)`` pair per cell, in flat-index order."""
    if field_n.grid != field_np1.grid:
        raise ConfigurationError("the two time levels live on different grids")
    padded = apply_ghost(field_n, bc, field_n.time)
    inputs = gather_inputs(padded, spec)
    return LearningSet(inputs, field_np1.values.copy(), inputs[:, spec.center].copy(),
                       np.arange(field_n.grid.size), 1)


def concat(sets: Sequence[LearningSet]) -> LearningSet:
    """Stack learning sets from several time-level pairs."""
    return LearningSet(np.concatenate([s.inputs for s in sets]),
                       np.concatenate([s.targets for s in sets]),
                       np.concatenate([s.center_inputs for s in sets]),
                       np.concatenate([s.cell_ids for s in sets]),
                       sum(s.pair_count for s in sets))
