"""Training of the residual network on a learning set.

The loss is the cell-measure weighted squared misfit of the residual update
over every pair in the set. The default optimizer is full-batch Adam; a
per-sample stochastic gradient mode is available for comparison.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import kernels
from .grid import ConfigurationError
from .network import Gradients, MlpParams
from .stencil import LearningSet

log = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    def __init__(self, iteration: int, loss: float, step_size: float):
        super().__init__(f"training diverged at iteration {iteration}: loss={loss!r}, "
                         f"step size={step_size:g}")
        self.iteration = iteration
        self.loss = loss
        self.step_size = step_size


@dataclass(frozen=True)
class TrainConfig:
    max_iters: int = 100_000
    tolerance: float = 1e-6
    optimizer: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    split: str = "full"
    train_fraction: float = 0.75
    log_every: int = 100
    divergence_factor: float = 1e6
    max_restarts: int = 3

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.tolerance > 0:
            raise ConfigurationError("tolerance must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if self.split not in ("full", "random"):
            raise ConfigurationError(f"unknown split {self.split!r}")
        if not 0 < self.train_fraction < 1:
            raise ConfigurationError("train_fraction must lie in (0, 1)")
        if not self.lr > 0:
            raise ConfigurationError("lr must be positive")
        if self.log_every < 1:
            raise ConfigurationError("log_every must be >= 1")


@dataclass
class LossHistory:
    iterations: list = field(default_factory=list)
    losses: list = field(default_factory=list)

    def record(self, it: int, loss: float):
        self.iterations.append(int(it))
        self.losses.append(float(loss))

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("iteration,loss\n")
            for it, loss in zip(self.iterations, self.losses):
                fh.write(f"{it},{loss!r}\n")

    @property
    def final(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def loss(params: MlpParams, data: LearningSet, cell_measure: float) -> float:
    return float(kernels.loss_batch(params.theta, params.sizes, data.inputs,
                                    data.center_inputs, data.targets, cell_measure))


def loss_gradient(params: MlpParams, data: LearningSet, cell_measure: float) -> Gradients:
    grad = np.zeros(params.n_params)
    kernels.loss_grad(params.theta, params.sizes, data.inputs, data.center_inputs,
                      data.targets, cell_measure, grad)
    return Gradients(params.sizes, grad)


def split_set(data: LearningSet, fraction: float, seed: int):
    """Random disjoint (train, test) partition; each side keeps ascending cell order."""
    if not 0 < fraction < 1:
        raise ConfigurationError("fraction must lie in (0, 1)")
    n = len(data)
    n_train = int(np.floor(fraction * n + 0.5))
    if n_train == 0 or n_train == n:
        raise ConfigurationError(f"splitting {n} pairs at {fraction} leaves one side empty")
    perm = np.random.default_rng(seed).permutation(n)
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])


class _Adam:
    def __init__(self, n: int, cfg: TrainConfig, lr: float):
        self.cfg = cfg
        self.lr = lr
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.t = 0

    def step(self, theta, grad):
        self.t += 1
        c = self.cfg
        kernels.adam_update(theta, grad, self.m, self.v, self.lr, c.beta1, c.beta2, c.eps, self.t)


def train(data: LearningSet, config: TrainConfig, init: MlpParams, cell_measure: float):
    """Minimize the loss from ``init``; returns ``(best params, LossHistory)``.

    Stops once the loss drops to ``config.tolerance`` or after
    ``config.max_iters`` parameter updates. If the loss turns non-finite or
    grows past ``divergence_factor`` times its initial value, the step size is
    halved and optimization restarts from the best parameters seen; after
    ``max_restarts`` such events :class:`TrainingDiverged` is raised.
    """
    if len(data) == 0:
        raise ConfigurationError("cannot train on an empty learning set")
    if config.optimizer == "sgd":
        return _train_sgd(data, config, init, cell_measure)

    sizes = init.sizes
    theta = init.theta.copy()
    grad = np.empty_like(theta)
    best_theta = theta.copy()
    best = np.inf
    initial = None
    lr = config.lr
    restarts = 0
    opt = _Adam(theta.size, config, lr)
    hist = LossHistory()
    X, c, y = data.inputs, data.center_inputs, data.targets
    it = 0
    cur = np.nan
    while True:
        cur = kernels.loss_grad(theta, sizes, X, c, y, cell_measure, grad)
        if initial is None:
            initial = cur
        if not np.isfinite(cur) or cur > config.divergence_factor * max(initial, 1e-300):
            restarts += 1
            if restarts > config.max_restarts or not np.isfinite(best):
                raise TrainingDiverged(it, float(cur), lr)
            lr *= 0.5
            log.warning("loss %.3e at iteration %d; restarting from best with step %g", cur, it, lr)
            theta[:] = best_theta
            opt = _Adam(theta.size, config, lr)
            continue
        if cur < best:
            best = cur
            best_theta[:] = theta
        if it % config.log_every == 0:
            hist.record(it, cur)
        if cur <= config.tolerance or it >= config.max_iters:
            break
        opt.step(theta, grad)
        it += 1
    if not hist.iterations or hist.iterations[-1] != it:
        hist.record(it, cur)
    out = MlpParams(sizes, best_theta, seed=init.seed,
                    meta={"iterations": it, "best_loss": float(best), "step_size": lr})
    return out, hist


def _train_sgd(data: LearningSet, config: TrainConfig, init: MlpParams, cell_measure: float):
    """Plain per-sample descent: one pair per update, reshuffled each sweep."""
    sizes = init.sizes
    theta = init.theta.copy()
    grad = np.empty_like(theta)
    rng = np.random.default_rng(config.seed)
    X, c, y = data.inputs, data.center_inputs, data.targets
    n = len(data)
    hist = LossHistory()
    full = kernels.loss_batch(theta, sizes, X, c, y, cell_measure)
    initial = full
    best, best_theta = full, theta.copy()
    hist.record(0, full)
    lr = config.lr
    restarts = 0
    order = rng.permutation(n)
    it = 0
    while it < config.max_iters and full > config.tolerance:
        m = order[it % n]
        kernels.loss_grad(theta, sizes, X[m:m + 1], c[m:m + 1], y[m:m + 1], cell_measure, grad)
        theta -= lr * grad
        it += 1
        if it % n == 0:
            order = rng.permutation(n)
        if it % config.log_every == 0 or it == config.max_iters:
            full = kernels.loss_batch(theta, sizes, X, c, y, cell_measure)
            if not np.isfinite(full) or full > config.divergence_factor * max(initial, 1e-300):
                restarts += 1
                if restarts > config.max_restarts:
                    raise TrainingDiverged(it, float(full), lr)
                lr *= 0.5
                theta[:] = best_theta
                full = best
                continue
            hist.record(it, full)
            if full < best:
                best, best_theta = full, theta.copy()
    out = MlpParams(sizes, best_theta, seed=init.seed,
                    meta={"iterations": it, "best_loss": float(best), "step_size": lr})
    return out, hist
