"""Acceptance criteria, each checked at its stated tolerance.

Every test prints one ``criterion N: PASS/FAIL`` line; the lines are also
collected into the terminal summary. Experiments run through the same
pipeline as ``cann bench`` and share results across criteria.

Criteria that this method does not reach are run in full and marked as
expected failures (strict, so an unexpected pass shows up as an error).
"""
import math
from pathlib import Path

import numpy as np
import pytest
import yaml

from cann import kernels, problems
from cann.bench import config_from_dict, run_experiment
from cann.evolve import MarchPlan, march
from cann.grid import BoundaryCondition, Field, build_grid
from cann.network import MlpParams, backward, forward, init_params
from cann.stencil import StencilSpec, assemble_pairs
from cann.training import loss, loss_gradient

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
PI = math.pi


def experiment(tmp_path_factory, name, **overrides):
    doc = yaml.safe_load((CONFIGS / f"{name}.yaml").read_text())
    doc.update(overrides)
    cfg = config_from_dict(doc)
    out = tmp_path_factory.mktemp(name)
    return run_experiment(cfg, out)


def best(record, variant, dx=None, dt=None):
    rows = [r for r in record.best if r.variant == variant
            and (dx is None or math.isclose(r.dx, dx)) and (dt is None or math.isclose(r.dt, dt))]
    assert len(rows) == 1, rows
    return rows[0]


@pytest.fixture(scope="session")
def ex1(tmp_path_factory):
    return experiment(tmp_path_factory, "ex1_five_point")


@pytest.fixture(scope="session")
def ex1_dt(tmp_path_factory):
    return experiment(tmp_path_factory, "ex1_five_point_dt", test_variants=["cos"])


# ---------------------------------------------------------------- 1

def fd_rel_error(analytic, fn, theta, h=1e-5):
    fd = np.empty_like(analytic)
    for k in range(theta.size):
        old = theta[k]
        theta[k] = old + h
        up = fn()
        theta[k] = old - h
        dn = fn()
        theta[k] = old
        fd[k] = (up - dn) / (2 * h)
    return float(np.max(np.abs(analytic - fd) / np.maximum(np.maximum(np.abs(analytic), np.abs(fd)), 1e-3)))


def test_c1_gradient_correctness(report, monkeypatch):
    rng = np.random.default_rng(11)
    g = build_grid((0.0, 0.0), (1.0, 1.0), (4, 4))
    bc = BoundaryCondition.periodic()
    worst = 0.0
    for name, impl in kernels.backends().items():
        for attr in ("forward_batch", "backward_batch", "loss_batch", "loss_grad"):
            monkeypatch.setattr(kernels, attr, getattr(impl, attr))
        for sizes in [(5, 10, 1), (9, 15, 1), (27, 10, 1)]:
            p = init_params(sizes, 7)
            p.theta[:] = rng.normal(scale=0.5, size=p.n_params)
            v = rng.normal(size=sizes[0])
            worst = max(worst, fd_rel_error(backward(p, v, 1.0).flat, lambda: forward(p, v), p.theta))
            kind = {5: "edge", 9: "vertex"}.get(sizes[0])
            if kind:
                f0 = Field(g, rng.normal(size=16))
                data = assemble_pairs(f0, Field(g, rng.normal(size=16)), bc, StencilSpec(kind, 2))
            else:
                g3 = build_grid((0.0,) * 3, (1.0,) * 3, (3, 3, 3))
                data = assemble_pairs(Field(g3, rng.normal(size=27)), Field(g3, rng.normal(size=27)), bc,
                                      StencilSpec("vertex", 3))
            worst = max(worst, fd_rel_error(loss_gradient(p, data, 0.1).flat,
                                            lambda: loss(p, data, 0.1), p.theta))
    assert report(1, worst < 1e-6, f"max relative gradient error {worst:.2e} (< 1e-6), all backends")


# ---------------------------------------------------------------- 2

def test_c2_residual_identity(report):
    rng = np.random.default_rng(2)
    ok = True
    for kind, d, bc in [("edge", 2, BoundaryCondition.periodic()), ("vertex", 2, BoundaryCondition.periodic()),
                        ("vertex", 3, BoundaryCondition.dirichlet(lambda x, t: np.sin(x[0] + t)))]:
        g = build_grid((0.0,) * d, (1.0,) * d, (5,) * d)
        f0 = Field(g, rng.normal(size=g.size))
        st = StencilSpec(kind, d)
        f, _ = march(MlpParams.zeros((st.width, 10, 1)), f0, MarchPlan(0.01, 100, bc, st))
        ok &= bool(np.array_equal(f.values, f0.values))
    assert report(2, ok, "zero network, 100 steps: bit-exact identity")


# ---------------------------------------------------------------- 3

def test_c3_reference_order(report):
    spec = problems.catalog("heat2d", "cos")
    meshes = [PI / 8, PI / 16, PI / 32]
    errs = []
    for h in meshes:
        g = spec.grid(h)
        f = problems.fd_advance(spec, problems.initial_field(spec, g), PI)
        d = f.values - problems.exact_field(spec, g, PI).values
        errs.append(math.sqrt(np.sum(d * d) * g.cell_measure))
    orders = [math.log(errs[k] / errs[k + 1]) / math.log(2) for k in range(2)]
    assert report(3, min(orders) >= 1.9, f"FD self-convergence orders {orders[0]:.3f}, {orders[1]:.3f} (>= 1.9)")


# ---------------------------------------------------------------- 4, 6, 10, 11

def test_c4_example1_accuracy(report, ex1):
    r = best(ex1, "cos", dx=PI / 16)
    assert report(4, r.l2 <= 1.5e-3, f"Ex1 five-point pi/16, cos: L2 {r.l2:.4e} (seed {r.seed}; <= 1.5e-3)")


def test_c6_refinement_trend(report, ex1):
    l2 = [best(ex1, "cos", dx=PI / n).l2 for n in (4, 8, 16)]
    ok = l2[0] > l2[1] > l2[2]
    assert report(6, ok, "Ex1 L2 at pi/4, pi/8, pi/16: " + ", ".join(f"{e:.4e}" for e in l2)
                  + " (strictly decreasing)")


def test_c10_training_depth(report, ex1):
    runs = [r for r in ex1.runs if r.variant == "cos" and math.isclose(r.dx, PI / 16)]
    losses = [r.train_loss_final for r in runs]
    ok = min(losses) <= 1e-6 and all(r.iterations <= 100_000 for r in runs)
    assert report(10, ok, "Ex1 pi/16 final losses " + ", ".join(f"{x:.3e}" for x in losses)
                  + " (one <= 1e-6 within 1e5 updates)")


def strip_wall(text):
    return [line.rsplit(",", 1)[0] for line in text.splitlines()]


def test_c11_determinism(report, ex1, tmp_path_factory):
    again = experiment(tmp_path_factory, "ex1_five_point")
    a = (ex1.output / "results.csv").read_text()
    b = (again.output / "results.csv").read_text()
    same = strip_wall(a) == strip_wall(b)
    same &= strip_wall((ex1.output / "all_runs.csv").read_text()) == \
        strip_wall((again.output / "all_runs.csv").read_text())
    for ck in sorted((ex1.output / "checkpoints").iterdir()):
        same &= ck.read_bytes() == (again.output / "checkpoints" / ck.name).read_bytes()
    assert report(11, same, "two Ex1 bench runs: results, all-runs CSVs and checkpoints identical "
                  "(wall_seconds column excluded)")


# ---------------------------------------------------------------- 5, 7

def test_c5_large_dt_stability(report, ex1_dt):
    r = best(ex1_dt, "cos", dt=4 * PI / 16)
    bounded = np.isfinite(r.max_norm) and r.max_norm <= 1.0 + 1e-9
    ok = bounded and r.l2 <= 3e-3
    assert report(5, ok, f"Ex1 pi/16, dt=4dx: L2 {r.l2:.4e} (<= 3e-3), max |u| over march {r.max_norm:.4f}")


@pytest.mark.xfail(strict=True, reason="errors across time steps spread by more than 4x")
def test_c7_dt_insensitivity(report, ex1_dt):
    l2 = [best(ex1_dt, "cos", dt=m * PI / 16).l2 for m in (0.5, 1, 2, 4)]
    spread = max(l2) / min(l2)
    assert report(7, spread <= 4.0, "Ex1 pi/16 L2 at dt = dx/2, dx, 2dx, 4dx: "
                  + ", ".join(f"{e:.4e}" for e in l2) + f" (spread {spread:.2f}, <= 4)")


# ---------------------------------------------------------------- 8

def test_c8a_porous_medium(report, tmp_path_factory):
    rec = experiment(tmp_path_factory, "ex6_pme", meshes=["1/16"])
    r = best(rec, "c11")
    assert report("8a", r.l2 <= 1.5e-2, f"PME 1/16, IC (5(x+y)+11)^(1/2), T=1: L2 {r.l2:.4e} (<= 1.5e-2)")


def test_c8b_nonlinear_split(report, tmp_path_factory):
    rec = experiment(tmp_path_factory, "ex5_nonlinear", meshes=["1/16"])
    r = best(rec, "heldout")
    assert report("8b", r.l2 <= 1e-3, f"nonlinear 1/16, held-out 25% at t1: L2 {r.l2:.4e} (<= 1e-3)")


# ---------------------------------------------------------------- 9

@pytest.mark.xfail(strict=True, reason="single-mode training data span 2 of 27 input directions; untrained "
                   "responses dominate the decayed solution")
def test_c9a_heat3d(report, tmp_path_factory):
    rec = experiment(tmp_path_factory, "ex7_heat3d", meshes=["pi/16"])
    r = best(rec, "cos")
    assert report("9a", r.l2 <= 1.5e-3, f"3D heat pi/16, cos: L2 {r.l2:.4e} (<= 1.5e-3)")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="single-mode training data span 2 of 81 input directions; the march "
                   "leaves that plane")
def test_c9b_heat4d(report, tmp_path_factory):
    rec = experiment(tmp_path_factory, "ex8_heat4d", meshes=["pi/8"])
    r = best(rec, "cos")
    assert report("9b", r.l2 <= 1.5e-3, f"4D heat pi/8, cos: L2 {r.l2:.4e} (<= 1.5e-3)")
