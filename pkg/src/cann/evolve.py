"""Explicit time marching with a trained network and error measurement."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import kernels
from .grid import BoundaryCondition, ConfigurationError, Field, apply_ghost, multi_index
from .network import MlpParams
from .stencil import StencilSpec, gather_inputs


class BlowUpError(ArithmeticError):
    def __init__(self, step: int, cell: tuple, value: float):
        super().__init__(f"non-finite value {value!r} in cell {cell} at step {step}")
        self.step = step
        self.cell = cell
        self.value = value


@dataclass(frozen=True)
class MarchPlan:
    dt: float
    n_steps: int
    bc: BoundaryCondition
    stencil: StencilSpec

    @classmethod
    def to_time(cls, T: float, dt: float, bc: BoundaryCondition, stencil: StencilSpec) -> "MarchPlan":
        """Plan reaching ``T`` exactly; ``T/dt`` must be an integer."""
        if dt <= 0:
            raise ConfigurationError("dt must be positive")
        n = round(T / dt)
        if n < 0 or abs(n * dt - T) > 1e-12 * max(1.0, abs(T)):
            raise ConfigurationError(f"T={T} is not an integer multiple of dt={dt}")
        return cls(dt, int(n), bc, stencil)

    @property
    def final_time(self) -> float:
        return self.n_steps * self.dt


@dataclass(frozen=True)
class ErrorReport:
    l2: float
    linf: float
    T: float = float("nan")
    mesh: float = float("nan")
    dt: float = float("nan")


def step(params: MlpParams, field: Field, plan: MarchPlan, step_index: int = 0) -> Field:
    """Advance every cell by one network step; the input field is not modified."""
    padded = apply_ghost(field, plan.bc, field.time)
    X = gather_inputs(padded, plan.stencil)
    new = X[:, plan.stencil.center] + kernels.forward_batch(params.theta, params.sizes, X)
    bad = ~np.isfinite(new)
    if bad.any():
        m = int(np.flatnonzero(bad)[0])
        raise BlowUpError(step_index, multi_index(field.grid, m), float(new[m]))
    return Field(field.grid, new, field.time + plan.dt)


def march(params: MlpParams, field0: Field, plan: MarchPlan):
    """Apply :func:`step` ``plan.n_steps`` times.

    Returns the final field and the max-norm of the solution after each step
    (entry 0 is the initial max-norm).
    """
    f = field0
    trace = [float(np.max(np.abs(f.values)))]
    for n in range(plan.n_steps):
        f = step(params, f, plan, n + 1)
        trace.append(float(np.max(np.abs(f.values))))
    if plan.n_steps == 0:
        f = Field(field0.grid, field0.values.copy(), field0.time)
    return f, trace


def error_norms(approx: Field, reference: Field, dt: float = float("nan")) -> ErrorReport:
    if approx.grid != reference.grid:
        raise ConfigurationError("fields live on different grids")
    diff = approx.values - reference.values
    return ErrorReport(l2=float(np.sqrt(np.sum(diff * diff) * approx.grid.cell_measure)),
                       linf=float(np.max(np.abs(diff))),
                       T=approx.time, mesh=float(max(approx.grid.dx)), dt=dt)


def set_error(params: MlpParams, data, cell_measure: float) -> ErrorReport:
    """One-step errors of the network on a learning set (e.g. a held-out split)."""
    pred = data.center_inputs + kernels.forward_batch(params.theta, params.sizes, data.inputs)
    diff = pred - data.targets
    return ErrorReport(float(np.sqrt(np.sum(diff * diff) * cell_measure)), float(np.max(np.abs(diff))))


def convergence_order(errors: Sequence[float], meshes: Sequence[float]) -> list:
    """``log(e_k/e_{k+1}) / log(h_k/h_{k+1})`` per consecutive pair; ``None`` when undefined."""
    if len(errors) != len(meshes):
        raise ConfigurationError("need one error per mesh")
    for a, b in zip(meshes[:-1], meshes[1:]):
        if not b < a:
            raise ConfigurationError("meshes must be strictly decreasing")
    orders: list[Optional[float]] = []
    for k in range(len(errors) - 1):
        e0, e1 = errors[k], errors[k + 1]
        if not (e0 > 0 and e1 > 0):
            orders.append(None)
        else:
            orders.append(math.log(e0 / e1) / math.log(meshes[k] / meshes[k + 1]))
    return orders


def export_field_csv(field: Field, path) -> None:
    """One row per cell: multi-index, center coordinates, value."""
    grid = field.grid
    d = grid.dim
    idx = np.indices(grid.shape).reshape(d, -1)
    centers = grid.centers()
    header = [f"i{k}" for k in range(d)] + [f"x{k}" for k in range(d)] + ["value"]
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for m in range(grid.size):
            row = [str(int(v)) for v in idx[:, m]] + [repr(float(v)) for v in centers[:, m]]
            row.append(repr(float(field.values[m])))
            fh.write(",".join(row) + "\n")
