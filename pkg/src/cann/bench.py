"""Declarative experiment runner.

An experiment file (YAML) names a problem, the initial conditions used for
training and testing, a list of meshes and time steps, the network and the
optimizer settings. :func:`run_experiment` trains one network per
(mesh, time step, seed), marches every test initial condition to the final
time and writes::

    results.csv      best seed per (variant, dx, dt) with convergence orders
    all_runs.csv     every seed, including failed ones
    table.txt        the results as a fixed-width table
    record.json      config hash and per-seed details
    histories/       loss history per run
    checkpoints/     trained parameters per run

Example file::

    name: ex1_five_point
    problem: heat2d
    train_variant: sin
    test_variants: [cos, cos_pi3]
    meshes: [pi/4, pi/8, pi/16, pi/32]
    dt: {rule: multiplier, values: [1]}
    stencil: edge
    hidden: [10]
    train: {max_iters: 100000, tolerance: 1.0e-6}
    target_mode: fd
    T: pi
    seeds: [0, 1, 2]
"""
from __future__ import annotations

import ast
import dataclasses
import hashlib
import json
import logging
import math
import operator
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import yaml

from . import problems
from .evolve import BlowUpError, MarchPlan, convergence_order, error_norms, march, set_error
from .grid import ConfigurationError
from .network import init_params, save_checkpoint
from .stencil import StencilSpec, assemble_pairs
from .training import TrainConfig, TrainingDiverged, split_set, train

log = logging.getLogger(__name__)

CSV_COLUMNS = ("problem", "variant", "stencil", "dx", "dt", "T", "seed", "l2", "linf",
               "order_l2", "order_linf", "train_loss_final", "wall_seconds")
HELDOUT = "heldout"

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_BLOWUP = 0, 2, 3, 4

_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul,
           ast.Div: operator.truediv, ast.Pow: operator.pow}


def parse_number(text) -> float:
    """Evaluate a numeric literal or a small arithmetic expression in ``pi``."""
    if isinstance(text, bool):
        raise ConfigurationError(f"expected a number, got {text!r}")
    if isinstance(text, (int, float)):
        return float(text)

    def ev(node):
        if isinstance(node, ast.Expression):
            return ev(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
            return float(node.value)
        if isinstance(node, ast.Name) and node.id == "pi":
            return math.pi
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](ev(node.left), ev(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub):
            return -ev(node.operand)
        raise ValueError
    try:
        return ev(ast.parse(str(text), mode="eval"))
    except (SyntaxError, ValueError, ZeroDivisionError):
        raise ConfigurationError(f"cannot read {text!r} as a number (use forms like 0.5, 1/16, pi/8)") from None


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    problem: str
    train_variant: str
    test_variants: tuple
    meshes: tuple
    dt_rule: str
    dt_values: tuple
    stencil: str
    hidden: tuple
    train: TrainConfig
    target_mode: str
    T: float
    seeds: tuple
    output: str
    mesh_labels: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.problem not in problems.PROBLEMS:
            raise ConfigurationError(f"unknown problem {self.problem!r}; choose from {sorted(problems.PROBLEMS)}")
        for v in (self.train_variant,) + self.test_variants:
            problems.catalog(self.problem, v)
        if not self.meshes or not self.dt_values or not self.seeds:
            raise ConfigurationError("meshes, dt values and seeds must all be non-empty")
        if self.dt_rule not in ("multiplier", "absolute"):
            raise ConfigurationError(f"dt rule must be 'multiplier' or 'absolute', got {self.dt_rule!r}")
        if self.stencil not in ("edge", "vertex"):
            raise ConfigurationError(f"stencil must be 'edge' or 'vertex', got {self.stencil!r}")
        if self.target_mode not in ("fd", "exact"):
            raise ConfigurationError(f"target_mode must be 'fd' or 'exact', got {self.target_mode!r}")
        if not self.hidden or any(int(n) < 1 for n in self.hidden):
            raise ConfigurationError(f"hidden layer sizes must be positive, got {self.hidden}")
        if not self.test_variants and self.train.split != "random":
            raise ConfigurationError("no test variants and no held-out split: nothing to evaluate")
        if self.T < 0:
            raise ConfigurationError("T must be non-negative")
        spec = problems.catalog(self.problem, self.train_variant)
        for dx in self.meshes:
            spec.grid(dx)
            for dt in self.dts(dx):
                MarchPlan.to_time(self.T, dt, spec.bc, StencilSpec(self.stencil, spec.dim))

    def dts(self, dx: float) -> list:
        if self.dt_rule == "multiplier":
            return [m * dx for m in self.dt_values]
        return list(self.dt_values)

    def sizes(self, dim: int) -> tuple:
        return (StencilSpec(self.stencil, dim).width,) + tuple(int(n) for n in self.hidden) + (1,)

    def semantic_dict(self) -> dict:
        """Every field that influences results; ``name`` and ``output`` do not."""
        return {
            "problem": self.problem, "train_variant": self.train_variant,
            "test_variants": list(self.test_variants), "meshes": [repr(float(m)) for m in self.meshes],
            "dt_rule": self.dt_rule, "dt_values": [repr(float(v)) for v in self.dt_values],
            "stencil": self.stencil, "hidden": [int(n) for n in self.hidden],
            "train": dataclasses.asdict(self.train), "target_mode": self.target_mode,
            "T": repr(float(self.T)), "seeds": [int(s) for s in self.seeds],
        }

    def config_hash(self) -> str:
        doc = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(doc.encode()).hexdigest()[:16]


_KEYS = {"name", "problem", "train_variant", "test_variants", "meshes", "dt", "stencil", "hidden",
         "train", "target_mode", "T", "seeds", "output"}


def config_from_dict(doc: dict, default_name: str = "experiment") -> ExperimentConfig:
    if not isinstance(doc, dict):
        raise ConfigurationError("experiment file must hold a mapping of keys to values")
    unknown = set(doc) - _KEYS
    if unknown:
        raise ConfigurationError(f"unknown keys {sorted(unknown)}; allowed keys are {sorted(_KEYS)}")
    if "problem" not in doc:
        raise ConfigurationError("missing required key 'problem'")
    pid = doc["problem"]
    if pid not in problems.PROBLEMS:
        raise ConfigurationError(f"unknown problem {pid!r}; choose from {sorted(problems.PROBLEMS)}")
    info = problems.PROBLEMS[pid]
    if "meshes" not in doc:
        raise ConfigurationError("missing required key 'meshes'")
    labels = tuple(str(m) for m in doc["meshes"])
    meshes = tuple(parse_number(m) for m in doc["meshes"])
    dt = doc.get("dt", {"rule": "multiplier", "values": [1]})
    if not isinstance(dt, dict) or set(dt) - {"rule", "values"}:
        raise ConfigurationError("dt must be a mapping with keys 'rule' and 'values'")
    train_doc = doc.get("train", {}) or {}
    try:
        tcfg = TrainConfig(**train_doc)
    except TypeError as exc:
        allowed = [f.name for f in dataclasses.fields(TrainConfig)]
        raise ConfigurationError(f"bad train settings ({exc}); allowed keys are {allowed}") from None
    name = str(doc.get("name", default_name))
    tests = doc.get("test_variants", list(info.tests))
    return ExperimentConfig(
        name=name, problem=pid,
        train_variant=str(doc.get("train_variant", info.train)),
        test_variants=tuple(str(v) for v in (tests or [])),
        meshes=meshes, mesh_labels=labels,
        dt_rule=str(dt.get("rule", "multiplier")),
        dt_values=tuple(parse_number(v) for v in dt.get("values", [1])),
        stencil=str(doc.get("stencil", info.stencil)),
        hidden=tuple(int(n) for n in doc.get("hidden", info.hidden)),
        train=tcfg,
        target_mode=str(doc.get("target_mode", "fd")),
        T=parse_number(doc.get("T", info.T)),
        seeds=tuple(int(s) for s in doc.get("seeds", [0, 1, 2])),
        output=str(doc.get("output", Path("results") / name)),
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        doc = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigurationError(f"{path}: malformed YAML ({exc})") from None
    except OSError as exc:
        raise ConfigurationError(f"{path}: {exc.strerror}") from None
    try:
        return config_from_dict(doc, default_name=path.stem)
    except ConfigurationError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


@dataclass
class SeedRun:
    variant: str
    dx: float
    dt: float
    T: float
    seed: int
    l2: float = math.nan
    linf: float = math.nan
    train_loss_final: float = math.nan
    wall_seconds: float = math.nan
    iterations: int = 0
    status: str = "ok"
    max_norm: float = math.nan
    loss_tail: list = field(default_factory=list)
    mesh_label: str = ""
    order_l2: Optional[float] = None
    order_linf: Optional[float] = None


@dataclass
class RunRecord:
    config: ExperimentConfig
    config_hash: str
    runs: list
    best: list
    output: Path

    @property
    def failures(self) -> list:
        return [r for r in self.runs if r.status != "ok"]

    @property
    def exit_code(self) -> int:
        status = {r.status for r in self.runs}
        if "blowup" in status:
            return EXIT_BLOWUP
        if "diverged" in status:
            return EXIT_DIVERGED
        return EXIT_OK


def _num(x) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _row(cfg: ExperimentConfig, r: SeedRun) -> list:
    return [cfg.problem, r.variant, cfg.stencil, _num(r.dx), _num(r.dt), _num(r.T), str(r.seed),
            _num(r.l2), _num(r.linf), _num(r.order_l2), _num(r.order_linf),
            _num(r.train_loss_final), f"{r.wall_seconds:.3f}"]


def write_csv(path, cfg: ExperimentConfig, rows) -> None:
    with open(path, "w") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for r in rows:
            fh.write(",".join(_row(cfg, r)) + "\n")


def format_table(cfg: ExperimentConfig, rows) -> str:
    """Fixed-width table, errors in 5 significant digits."""
    head = f"{'variant':<12} {'dx':>10} {'dt':>11} {'seed':>4} {'L2':>11} {'order':>6} {'Linf':>11} {'order':>6}"
    lines = [f"{cfg.name}: {cfg.problem}, {cfg.stencil} stencil, T={cfg.T:.5g}", head, "-" * len(head)]
    fmt_o = lambda o: f"{o:6.2f}" if o is not None else f"{'':>6}"
    for r in rows:
        lines.append(f"{r.variant:<12} {r.mesh_label:>10} {r.dt:11.4e} {r.seed:>4} {r.l2:11.4e} "
                     f"{fmt_o(r.order_l2)} {r.linf:11.4e} {fmt_o(r.order_linf)}")
    return "\n".join(lines) + "\n"


def _select_best(cfg: ExperimentConfig, runs: list) -> list:
    groups: dict = {}
    for r in runs:
        groups.setdefault((r.variant, r.dx, r.dt), []).append(r)
    best = []
    for key, group in groups.items():
        ok = [r for r in group if r.status == "ok" and np.isfinite(r.l2)]
        if ok:
            best.append(dataclasses.replace(min(ok, key=lambda r: (r.l2, r.seed))))
    # convergence orders over meshes at a fixed dt rule value
    by_rule: dict = {}
    for r in best:
        j = [i for i, dt in enumerate(cfg.dts(r.dx)) if dt == r.dt][0]
        by_rule.setdefault((r.variant, j), []).append(r)
    for group in by_rule.values():
        group.sort(key=lambda r: -r.dx)
        if len(group) < 2:
            continue
        meshes = [r.dx for r in group]
        o2 = convergence_order([r.l2 for r in group], meshes)
        oi = convergence_order([r.linf for r in group], meshes)
        for r, a, b in zip(group[1:], o2, oi):
            r.order_l2, r.order_linf = a, b
    order = {v: i for i, v in enumerate(cfg.test_variants + (HELDOUT,))}
    best.sort(key=lambda r: (order[r.variant], -r.dx, r.dt))
    return best


def run_experiment(cfg: ExperimentConfig, output: Optional[Path] = None) -> RunRecord:
    out = Path(output if output is not None else cfg.output)
    (out / "histories").mkdir(parents=True, exist_ok=True)
    (out / "checkpoints").mkdir(parents=True, exist_ok=True)
    spec = problems.catalog(cfg.problem, cfg.train_variant)
    tests = {v: problems.catalog(cfg.problem, v) for v in cfg.test_variants}
    stencil = StencilSpec(cfg.stencil, spec.dim)
    sizes = cfg.sizes(spec.dim)
    runs = []
    labels = cfg.mesh_labels or tuple(f"{m:.5g}" for m in cfg.meshes)
    for i, (dx, label) in enumerate(zip(cfg.meshes, labels)):
        grid = spec.grid(dx)
        refs = {v: problems.reference_field(s, grid, cfg.T) for v, s in tests.items()}
        starts = {v: problems.initial_field(s, grid) for v, s in tests.items()}
        for j, dt in enumerate(cfg.dts(dx)):
            f0, f1 = problems.generate_target(spec, grid, dt, cfg.target_mode)
            data = assemble_pairs(f0, f1, spec.bc, stencil)
            heldout = None
            if cfg.train.split == "random":
                data, heldout = split_set(data, cfg.train.train_fraction, cfg.train.seed)
            plan = MarchPlan.to_time(cfg.T, dt, spec.bc, stencil)
            for seed in cfg.seeds:
                tag = f"dx{i}_dt{j}_seed{seed}"
                base = dict(dx=dx, dt=dt, seed=seed, mesh_label=label)
                t0 = time.perf_counter()
                try:
                    params, hist = train(data, dataclasses.replace(cfg.train, seed=seed),
                                         init_params(sizes, seed), grid.cell_measure)
                except TrainingDiverged as exc:
                    log.error("%s %s: %s", cfg.name, tag, exc)
                    for v in cfg.test_variants:
                        runs.append(SeedRun(variant=v, T=cfg.T, status="diverged", **base))
                    continue
                train_seconds = time.perf_counter() - t0
                hist.to_csv(out / "histories" / f"{tag}.csv")
                save_checkpoint(params, out / "checkpoints" / f"{tag}.json", problem=cfg.problem,
                                train_variant=cfg.train_variant, dx=dx, dt=dt, stencil=cfg.stencil)
                common = dict(train_loss_final=params.meta["best_loss"], iterations=params.meta["iterations"],
                              loss_tail=hist.losses[-5:], **base)
                if heldout is not None:
                    rep = set_error(params, heldout, grid.cell_measure)
                    runs.append(SeedRun(variant=HELDOUT, T=dt, l2=rep.l2, linf=rep.linf,
                                        wall_seconds=train_seconds, **common))
                for v in cfg.test_variants:
                    t1 = time.perf_counter()
                    test_plan = MarchPlan(plan.dt, plan.n_steps, tests[v].bc, stencil)
                    try:
                        fT, trace = march(params, starts[v], test_plan)
                    except BlowUpError as exc:
                        log.error("%s %s %s: %s", cfg.name, tag, v, exc)
                        runs.append(SeedRun(variant=v, T=cfg.T, status="blowup",
                                            wall_seconds=train_seconds + time.perf_counter() - t1, **common))
                        continue
                    rep = error_norms(fT, refs[v])
                    runs.append(SeedRun(variant=v, T=cfg.T, l2=rep.l2, linf=rep.linf, max_norm=max(trace),
                                        wall_seconds=train_seconds + time.perf_counter() - t1, **common))
                    log.info("%s %s %s: L2=%.4e Linf=%.4e loss=%.3e iters=%d", cfg.name, tag, v,
                             rep.l2, rep.linf, params.meta["best_loss"], params.meta["iterations"])
    best = _select_best(cfg, runs)
    record = RunRecord(cfg, cfg.config_hash(), runs, best, out)
    write_csv(out / "results.csv", cfg, best)
    write_csv(out / "all_runs.csv", cfg, runs)
    (out / "table.txt").write_text(format_table(cfg, best))
    doc = {"name": cfg.name, "config_hash": record.config_hash, "config": cfg.semantic_dict(),
           "runs": [dataclasses.asdict(r) for r in runs],
           "best": [{"variant": r.variant, "dx": r.dx, "dt": r.dt, "seed": r.seed} for r in best]}
    (out / "record.json").write_text(json.dumps(doc, indent=1, default=float) + "\n")
    return record
