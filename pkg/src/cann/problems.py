"""The example parabolic problems, their exact solutions and a finite-difference reference.

Coordinate arrays are stacked on axis 0: a function of a point receives ``x``
with ``x[k]`` the k-th coordinate (any trailing shape) and returns values of
the trailing shape.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .grid import BoundaryCondition, ConfigurationError, Field, GridSpec, apply_ghost, cell_average

PI = math.pi
TWO_PI = 2.0 * math.pi

# stability factors of the sub-stepped reference integrator
DIFFUSIVE_FACTOR = 0.2
ADVECTIVE_FACTOR = 0.2


@dataclass(frozen=True)
class ProblemSpec:
    id: str
    variant: str
    lo: tuple
    hi: tuple
    coefficients: dict
    initial: Callable
    operator: Callable = field(repr=False)
    bc: BoundaryCondition
    exact: Optional[Callable] = field(default=None, repr=False)
    forcing: Optional[Callable] = field(default=None, repr=False)
    velocity: Optional[Callable] = field(default=None, repr=False)
    diffusivity: Callable = field(default=lambda u: 1.0, repr=False)
    max_speed: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.lo)

    def grid(self, dx: float):
        """Uniform grid of spacing ``dx`` on the problem domain."""
        from .grid import build_grid
        counts = []
        for a, b in zip(self.lo, self.hi):
            n = (b - a) / dx
            if abs(n - round(n)) > 1e-9 * max(1.0, n):
                raise ConfigurationError(f"dx={dx} does not divide the domain [{a}, {b}]")
            counts.append(int(round(n)))
        return build_grid(self.lo, self.hi, counts)


# ---------------------------------------------------------------- operators

def _shift(P: np.ndarray, off) -> np.ndarray:
    return P[tuple(slice(1 + o, n - 1 + o) for o, n in zip(off, P.shape))]


def _unit(d, k, s=1):
    o = [0] * d
    o[k] = s
    return tuple(o)


def laplacian(P, dx):
    d = P.ndim
    c = _shift(P, (0,) * d)
    return sum((_shift(P, _unit(d, k)) - 2.0 * c + _shift(P, _unit(d, k, -1))) / dx[k] ** 2
               for k in range(d))


def mixed_xy(P, dx):
    return (_shift(P, (1, 1)) - _shift(P, (1, -1)) - _shift(P, (-1, 1))
            + _shift(P, (-1, -1))) / (4.0 * dx[0] * dx[1])


def central_diff(P, dx, k):
    d = P.ndim
    return (_shift(P, _unit(d, k)) - _shift(P, _unit(d, k, -1))) / (2.0 * dx[k])


def _face_divergence(P, dx, flux):
    """Divergence of a 2-D face flux ``flux(u_left, u_right, g_normal, g_tangential)``."""
    out = 0.0
    for k in (0, 1):
        Q = P if k == 0 else P.T
        hn, ht = (dx[0], dx[1]) if k == 0 else (dx[1], dx[0])
        uL, uR = Q[:-1, 1:-1], Q[1:, 1:-1]
        gn = (uR - uL) / hn
        gt = (Q[:-1, 2:] - Q[:-1, :-2] + Q[1:, 2:] - Q[1:, :-2]) / (4.0 * ht)
        F = flux(uL, uR, gn, gt)
        div = (F[1:] - F[:-1]) / hn
        out = out + (div if k == 0 else div.T)
    return out


def _padded_centers(grid: GridSpec) -> np.ndarray:
    pg = grid.padded()
    return pg.centers().reshape((grid.dim,) + pg.shape)


def _interior_centers(grid: GridSpec) -> np.ndarray:
    return grid.centers().reshape((grid.dim,) + grid.shape)


def spatial_operator(spec: ProblemSpec, grid: GridSpec, padded: np.ndarray, t: float = 0.0) -> np.ndarray:
    """Discrete right-hand side at every cell, shape ``grid.shape``."""
    return spec.operator(padded, grid, t)


def flux_divergence(spec: ProblemSpec, grid: GridSpec, padded: np.ndarray, cell, t: float = 0.0) -> float:
    return float(spatial_operator(spec, grid, padded, t)[tuple(cell)])


# ---------------------------------------------------------------- catalog

def _plane(fn, phase=0.0, amp=1.0):
    return lambda x: amp * fn(np.sum(x, axis=0) + phase)


def _heat(dim, lo, hi, variant, waves, bc_kind):
    if variant not in waves:
        raise ConfigurationError(f"heat{dim}d has no variant {variant!r}; choose from {sorted(waves)}")
    fn, phase = waves[variant]
    exact = lambda x, t: math.exp(-dim * t) * fn(np.sum(x, axis=0) + phase)
    bc = BoundaryCondition.periodic() if bc_kind == "periodic" else BoundaryCondition.dirichlet(exact)
    return ProblemSpec(
        id=f"heat{dim}d", variant=variant, lo=lo, hi=hi, coefficients={"mu": 1.0},
        initial=lambda x: exact(x, 0.0), exact=exact, bc=bc,
        operator=lambda P, g, t: laplacian(P, g.dx), diffusivity=lambda u: 1.0)


def heat2d(variant):
    waves = {"sin": (np.sin, 0.0), "cos": (np.cos, 0.0), "cos_pi3": (np.cos, PI / 3)}
    return _heat(2, (0.0, 0.0), (TWO_PI, TWO_PI), variant, waves, "periodic")


def heatnd(dim):
    def make(variant):
        waves = {"sin": (np.sin, 0.0), "cos": (np.cos, 0.0)}
        # sum(x) is only pi-anti-periodic on [0, pi]^d, so boundary data comes from the exact solution
        return _heat(dim, (0.0,) * dim, (PI,) * dim, variant, waves, "dirichlet")
    return make


def _advected(fn, phase, decay, c):
    """``exp(-decay*t) * fn(x + y - 2ct + phase)``: exact for the 2-D advection-diffusion examples."""
    return lambda x, t: math.exp(-decay * t) * fn(x[0] + x[1] - 2.0 * c * t + phase)


def convdiff2d(variant, c=1.0, mu=1.0):
    waves = {"sin": (np.sin, 0.0), "cos": (np.cos, 0.0), "cos_pi6": (np.cos, PI / 6)}
    if variant not in waves:
        raise ConfigurationError(f"convdiff2d has no variant {variant!r}; choose from {sorted(waves)}")
    exact = _advected(*waves[variant], 2.0 * mu, c)

    def op(P, g, t):
        return mu * laplacian(P, g.dx) - c * (central_diff(P, g.dx, 0) + central_diff(P, g.dx, 1))

    return ProblemSpec("convdiff2d", variant, (0.0, 0.0), (TWO_PI, TWO_PI), {"c": c, "mu": mu},
                       initial=lambda x: exact(x, 0.0), exact=exact, bc=BoundaryCondition.periodic(),
                       operator=op, diffusivity=lambda u: mu, max_speed=2.0 * abs(c))


def aniso2d(variant, c=1.0, mu=0.01):
    waves = {"cos": (np.cos, 0.0), "sin": (np.sin, 0.0)}
    if variant not in waves:
        raise ConfigurationError(f"aniso2d has no variant {variant!r}; choose from {sorted(waves)}")
    # u_xx + u_xy + u_yy = 3 g'' for g(x + y)
    exact = _advected(*waves[variant], 3.0 * mu, c)

    def op(P, g, t):
        return (mu * (laplacian(P, g.dx) + mixed_xy(P, g.dx))
                - c * (central_diff(P, g.dx, 0) + central_diff(P, g.dx, 1)))

    return ProblemSpec("aniso2d", variant, (0.0, 0.0), (TWO_PI, TWO_PI), {"c": c, "mu": mu},
                       initial=lambda x: exact(x, 0.0), exact=exact, bc=BoundaryCondition.periodic(),
                       operator=op, diffusivity=lambda u: 1.5 * mu, max_speed=2.0 * abs(c))


def ns_velocity(x):
    return np.stack([-np.cos(x[0]) * np.sin(x[1]), np.sin(x[0]) * np.cos(x[1])])


def ns_vorticity2d(variant, re=100.0):
    ics = {
        "2cosy_sinx": lambda x: 2.0 * np.cos(x[1]) * np.sin(x[0]),
        "2cosx_siny": lambda x: 2.0 * np.cos(x[0]) * np.sin(x[1]),
        "2cosx_cosy": lambda x: 2.0 * np.cos(x[0]) * np.cos(x[1]),
    }
    if variant not in ics:
        raise ConfigurationError(f"ns_vorticity2d has no variant {variant!r}; choose from {sorted(ics)}")
    exact = None
    if variant == "2cosx_cosy":
        # the vorticity of the prescribed velocity: advection vanishes identically
        exact = lambda x, t: 2.0 * math.exp(-2.0 * t / re) * np.cos(x[0]) * np.cos(x[1])

    def op(P, g, t):
        w = ns_velocity(_padded_centers(g))
        adv = central_diff(w[0] * P, g.dx, 0) + central_diff(w[1] * P, g.dx, 1)
        return laplacian(P, g.dx) / re - adv

    return ProblemSpec("ns_vorticity2d", variant, (0.0, 0.0), (TWO_PI, TWO_PI), {"Re": re},
                       initial=ics[variant], exact=exact, bc=BoundaryCondition.periodic(),
                       operator=op, velocity=ns_velocity, diffusivity=lambda u: 1.0 / re,
                       max_speed=2.0)


def nonlinear_exact(x, t):
    return math.exp(-t) * (x[0] ** 2 + x[1] ** 2) / 2.0


def derive_forcing():
    """Forcing ``f = u_t - div a(grad u)`` for ``u = exp(-t)(x^2+y^2)/2``.

    With ``a(g) = (1 + exp(-|g|^2)) g`` and ``q = |grad u|^2 = 2 exp(-t) u``:
    ``div a = 2 exp(-t) (1 + exp(-q)) - 2 exp(-t) q exp(-q)`` and ``u_t = -u``.
    """
    def f(x, t):
        u = nonlinear_exact(x, t)
        e = math.exp(-t)
        q = 2.0 * e * u
        return -u - 2.0 * e * (1.0 + np.exp(-q)) + 2.0 * e * q * np.exp(-q)
    return f


def nonlinear2d(variant="quadratic"):
    if variant != "quadratic":
        raise ConfigurationError(f"nonlinear2d has no variant {variant!r}; choose from ['quadratic']")
    forcing = derive_forcing()

    def flux(uL, uR, gn, gt):
        return (1.0 + np.exp(-(gn * gn + gt * gt))) * gn

    def op(P, g, t):
        return _face_divergence(P, g.dx, flux) + forcing(_interior_centers(g), t)

    return ProblemSpec("nonlinear2d", variant, (-1.0, -1.0), (1.0, 1.0), {},
                       initial=lambda x: nonlinear_exact(x, 0.0), exact=nonlinear_exact,
                       forcing=forcing, bc=BoundaryCondition.dirichlet(nonlinear_exact),
                       operator=op, diffusivity=lambda u: 2.0)


def pme2d(variant):
    shifts = {"c15": 15.0, "c11": 11.0}
    if variant not in shifts:
        raise ConfigurationError(f"pme2d has no variant {variant!r}; choose from {sorted(shifts)}")
    s = shifts[variant]
    # (5(x+y+t)+s)^(1/2) solves u_t = 0.2 div(u^2 grad u) for any shift s
    exact = lambda x, t: np.sqrt(5.0 * (x[0] + x[1] + t) + s)

    def flux(uL, uR, gn, gt):
        um = 0.5 * (uL + uR)
        return 0.2 * um * um * gn

    return ProblemSpec("pme2d", variant, (0.0, 0.0), (1.0, 1.0), {"shift": s},
                       initial=lambda x: exact(x, 0.0), exact=exact,
                       bc=BoundaryCondition.dirichlet(exact),
                       operator=lambda P, g, t: _face_divergence(P, g.dx, flux),
                       diffusivity=lambda u: 0.2 * float(np.max(u * u)))


@dataclass(frozen=True)
class ProblemInfo:
    """Reference setup for one example: train/test variants and default settings."""
    factory: Callable
    train: str
    tests: tuple
    stencil: str
    hidden: tuple
    T: float


PROBLEMS = {
    "heat2d": ProblemInfo(heat2d, "sin", ("cos", "cos_pi3"), "edge", (10,), PI),
    "convdiff2d": ProblemInfo(convdiff2d, "sin", ("cos", "cos_pi6"), "vertex", (15,), PI),
    "aniso2d": ProblemInfo(aniso2d, "cos", ("sin",), "edge", (15,), PI / 4),
    "ns_vorticity2d": ProblemInfo(ns_vorticity2d, "2cosy_sinx", ("2cosx_siny",), "edge", (15,), PI),
    "nonlinear2d": ProblemInfo(nonlinear2d, "quadratic", ("quadratic",), "edge", (15,), 1.0),
    "pme2d": ProblemInfo(pme2d, "c15", ("c11",), "edge", (6,), 1.0),
    "heat3d": ProblemInfo(heatnd(3), "sin", ("cos",), "vertex", (10,), PI),
    "heat4d": ProblemInfo(heatnd(4), "sin", ("cos",), "vertex", (10,), PI),
}


def catalog(pid: str, variant: Optional[str] = None) -> ProblemSpec:
    """Problem ``pid`` with initial condition ``variant`` (the training one by default)."""
    if pid not in PROBLEMS:
        raise ConfigurationError(f"unknown problem {pid!r}; choose from {sorted(PROBLEMS)}")
    info = PROBLEMS[pid]
    return info.factory(info.train if variant is None else variant)


# ---------------------------------------------------------------- reference solver

def stable_substep(spec: ProblemSpec, grid: GridSpec, values: np.ndarray) -> float:
    h = min(grid.dx)
    dt = DIFFUSIVE_FACTOR * h * h * (2.0 / grid.dim) / max(spec.diffusivity(values), 1e-300)
    if spec.max_speed > 0:
        dt = min(dt, ADVECTIVE_FACTOR * h / spec.max_speed)
    return dt


def fd_advance(spec: ProblemSpec, field0: Field, duration: float) -> Field:
    """Advance cell averages by ``duration`` with sub-stepped two-stage Runge-Kutta.

    The inner step obeys the explicit parabolic (and advective) stability
    limit regardless of how long ``duration`` is.
    """
    if duration < 0:
        raise ConfigurationError("cannot advance backwards in time")
    grid = field0.grid
    u = field0.values.copy()
    t = field0.time
    if duration == 0:
        return Field(grid, u, t)
    n_sub = max(1, math.ceil(duration / stable_substep(spec, grid, u) - 1e-9))
    dt = duration / n_sub

    def rhs(vals, tt):
        P = apply_ghost(Field(grid, vals, tt), spec.bc, tt)
        return spec.operator(P, grid, tt).ravel()

    for n in range(n_sub):
        tn = field0.time + n * dt
        u1 = u + dt * rhs(u, tn)
        u = 0.5 * u + 0.5 * (u1 + dt * rhs(u1, tn + dt))
    return Field(grid, u, field0.time + duration)


def initial_field(spec: ProblemSpec, grid: GridSpec, q: int = 4) -> Field:
    return cell_average(grid, spec.initial, q, 0.0)


def exact_field(spec: ProblemSpec, grid: GridSpec, t: float, q: int = 4) -> Field:
    if spec.exact is None:
        raise ConfigurationError(f"{spec.id}/{spec.variant} has no exact solution")
    return cell_average(grid, lambda x: spec.exact(x, t), q, t)


def generate_target(spec: ProblemSpec, grid: GridSpec, dt: float, mode: str = "fd"):
    """Training pair ``(average at t0=0, average at t1=dt)``.

    ``mode="exact"`` averages the exact solution at both levels; ``mode="fd"``
    starts from the initial averages and advances them with :func:`fd_advance`.
    """
    if dt < 0:
        raise ConfigurationError("dt must be non-negative")
    if mode == "exact":
        return exact_field(spec, grid, 0.0), exact_field(spec, grid, dt)
    if mode != "fd":
        raise ConfigurationError(f"unknown target mode {mode!r}")
    f0 = initial_field(spec, grid)
    return f0, fd_advance(spec, f0, dt)


def reference_field(spec: ProblemSpec, grid: GridSpec, T: float) -> Field:
    """Reference averages at ``T``: exact when known, otherwise the FD solution."""
    if spec.exact is not None:
        return exact_field(spec, grid, T)
    return fd_advance(spec, initial_field(spec, grid), T)


def with_domain(spec: ProblemSpec, lo, hi, bc: Optional[BoundaryCondition] = None) -> ProblemSpec:
    """Copy of ``spec`` on another box (used for periodic-domain checks)."""
    return replace(spec, lo=tuple(lo), hi=tuple(hi), bc=spec.bc if bc is None else bc)
