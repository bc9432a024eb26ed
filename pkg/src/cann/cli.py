"""Command line entry point: ``cann {train,evolve,bench,gradcheck,export}``."""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import bench, kernels, problems
from .evolve import BlowUpError, MarchPlan, error_norms, export_field_csv, march
from .grid import ConfigurationError
from .network import forward, init_params, load_checkpoint, save_checkpoint
from .stencil import StencilSpec, assemble_pairs
from .training import TrainingDiverged, split_set, train


def _sizes(text: str) -> tuple:
    try:
        return tuple(int(s) for s in text.split(","))
    except ValueError:
        raise ConfigurationError(f"sizes must be comma-separated integers like 5,10,1, got {text!r}") from None


def cmd_train(args) -> int:
    cfg = bench.load_config(args.config)
    if not 0 <= args.mesh < len(cfg.meshes):
        raise ConfigurationError(f"--mesh must index one of the {len(cfg.meshes)} meshes")
    dx = cfg.meshes[args.mesh]
    dts = cfg.dts(dx)
    if not 0 <= args.dt < len(dts):
        raise ConfigurationError(f"--dt must index one of the {len(dts)} time steps")
    dt = dts[args.dt]
    seed = cfg.seeds[0] if args.seed is None else args.seed
    spec = problems.catalog(cfg.problem, cfg.train_variant)
    grid = spec.grid(dx)
    stencil = StencilSpec(cfg.stencil, spec.dim)
    f0, f1 = problems.generate_target(spec, grid, dt, cfg.target_mode)
    data = assemble_pairs(f0, f1, spec.bc, stencil)
    if cfg.train.split == "random":
        data, _ = split_set(data, cfg.train.train_fraction, cfg.train.seed)
    params, hist = train(data, dataclasses.replace(cfg.train, seed=seed),
                         init_params(cfg.sizes(spec.dim), seed), grid.cell_measure)
    save_checkpoint(params, args.out, problem=cfg.problem, train_variant=cfg.train_variant,
                    dx=dx, dt=dt, stencil=cfg.stencil)
    if args.history:
        hist.to_csv(args.history)
    print(f"trained {params.sizes} on {len(data)} pairs: loss {params.meta['best_loss']:.4e} "
          f"after {params.meta['iterations']} iterations -> {args.out}")
    return bench.EXIT_OK


def _stencil_for(params, dim: int, kind) -> StencilSpec:
    if kind:
        st = StencilSpec(kind, dim)
    else:
        match = [k for k in ("edge", "vertex") if StencilSpec(k, dim).width == params.sizes[0]]
        if not match:
            raise ConfigurationError(f"checkpoint input width {params.sizes[0]} fits no {dim}-d stencil")
        st = StencilSpec(match[0], dim)
    if st.width != params.sizes[0]:
        raise ConfigurationError(f"checkpoint expects {params.sizes[0]} inputs, {st.kind} stencil gives {st.width}")
    return st


def cmd_evolve(args) -> int:
    params = load_checkpoint(args.checkpoint)
    spec = problems.catalog(args.problem, args.variant)
    dx = bench.parse_number(args.dx)
    dt = bench.parse_number(args.dt) if args.dt is not None else dx
    T = bench.parse_number(args.T)
    grid = spec.grid(dx)
    st = _stencil_for(params, spec.dim, args.stencil)
    plan = MarchPlan.to_time(T, dt, spec.bc, st)
    fT, trace = march(params, problems.initial_field(spec, grid), plan)
    if args.out:
        export_field_csv(fT, args.out)
    rep = error_norms(fT, problems.reference_field(spec, grid, T))
    print(f"{spec.id}/{spec.variant} dx={dx:.5g} dt={dt:.5g} T={T:.5g} steps={plan.n_steps}: "
          f"L2={rep.l2:.4e} Linf={rep.linf:.4e} max|u|={trace[-1]:.4e}")
    return bench.EXIT_OK


def _config_files(paths) -> list:
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files += sorted(list(p.glob("*.yaml")) + list(p.glob("*.yml")))
        elif p.exists():
            files.append(p)
        else:
            raise ConfigurationError(f"{p}: no such file or directory")
    if not files:
        raise ConfigurationError("no experiment files found")
    return files


def cmd_bench(args) -> int:
    configs = [bench.load_config(f) for f in _config_files(args.paths)]
    code = bench.EXIT_OK
    for cfg in configs:
        out = Path(args.out) / cfg.name if args.out else None
        rec = bench.run_experiment(cfg, out)
        print(bench.format_table(cfg, rec.best))
        print(f"wrote {rec.output}/results.csv (config {rec.config_hash})")
        if rec.failures:
            print(f"{len(rec.failures)} run(s) failed: " +
                  ", ".join(sorted({f'{r.status} at dx={r.dx:.4g} seed {r.seed}' for r in rec.failures})))
        code = max(code, rec.exit_code)
    return code


def gradcheck(sizes, seed: int, h: float = 1e-5) -> float:
    """Max relative error of the backward pass against central differences."""
    from .network import backward
    rng = np.random.default_rng(seed)
    p = init_params(sizes, seed)
    p.theta[:] = rng.normal(scale=0.5, size=p.n_params)
    v = rng.normal(size=p.sizes[0])
    g = backward(p, v, 1.0).flat
    fd = np.empty_like(g)
    for k in range(p.n_params):
        a, b = p.copy(), p.copy()
        a.theta[k] += h
        b.theta[k] -= h
        fd[k] = (forward(a, v) - forward(b, v)) / (2 * h)
    return float(np.max(np.abs(g - fd) / np.maximum(np.maximum(np.abs(g), np.abs(fd)), 1e-3)))


def cmd_gradcheck(args) -> int:
    err = gradcheck(_sizes(args.sizes), args.seed)
    ok = err < args.tol
    print(f"sizes {args.sizes} seed {args.seed} backend {kernels.BACKEND}: max rel error {err:.3e} "
          f"({'ok' if ok else 'FAILED'})")
    return bench.EXIT_OK if ok else 1


def cmd_export(args) -> int:
    params = load_checkpoint(args.checkpoint)
    np.set_printoptions(precision=args.precision, suppress=False, linewidth=110)
    print(f"sizes {params.sizes}, {params.n_params} parameters, seed {params.seed}")
    for key, val in sorted(params.meta.items()):
        print(f"  {key}: {val}")
    for l, (w, b) in enumerate(zip(params.weights, params.biases)):
        act = params.hidden_activation if l < len(params.weights) - 1 else params.output_activation
        print(f"layer {l}: {w.shape[1]} -> {w.shape[0]} ({act})")
        print("W =")
        print(w)
        print("b =")
        print(b)
    return bench.EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cann", description="Cell-average neural network solver for parabolic PDEs.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress of every run")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one network from an experiment file")
    p.add_argument("config")
    p.add_argument("--out", required=True, help="checkpoint path (JSON)")
    p.add_argument("--mesh", type=int, default=0, help="index into the meshes list")
    p.add_argument("--dt", type=int, default=0, help="index into the time-step list")
    p.add_argument("--seed", type=int)
    p.add_argument("--history", help="write the loss history CSV here")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evolve", help="march a checkpoint on a problem and report errors")
    p.add_argument("checkpoint")
    p.add_argument("--problem", required=True, choices=sorted(problems.PROBLEMS))
    p.add_argument("--variant", help="initial condition (default: the training one)")
    p.add_argument("--dx", required=True, help="mesh size, e.g. pi/16")
    p.add_argument("--dt", help="time step (default: dx)")
    p.add_argument("--T", required=True, help="final time, e.g. pi")
    p.add_argument("--stencil", choices=["edge", "vertex"])
    p.add_argument("--out", help="write the final field as CSV")
    p.set_defaults(fn=cmd_evolve)

    p = sub.add_parser("bench", help="run experiment files or every file in a directory")
    p.add_argument("paths", nargs="+")
    p.add_argument("--out", help="write each experiment under OUT/<name> instead of its own output")
    p.set_defaults(fn=cmd_bench)

    p = sub.add_parser("gradcheck", help="check backpropagation against finite differences")
    p.add_argument("--sizes", default="5,10,1")
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("export", help="print a checkpoint's parameters")
    p.add_argument("checkpoint")
    p.add_argument("--precision", type=int, default=6)
    p.set_defaults(fn=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return bench.EXIT_CONFIG
    except TrainingDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return bench.EXIT_DIVERGED
    except BlowUpError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return bench.EXIT_BLOWUP


if __name__ == "__main__":
    sys.exit(main())
