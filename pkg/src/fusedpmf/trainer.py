"""Full-batch gradient descent on the fused objective."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .factorization import (
    FACTOR_NAMES,
    USER_FACTORS,
    CountWeights,
    Hyperparameters,
    LatentFactors,
    _evaluate,
    _prepare,
    active_blocks,
    BLOCKS,
)
from .features import FeedbackChannel

__all__ = ["TrainConfig", "TrainTrace", "DivergenceError", "init_factors", "fit", "write_trace_csv"]

logger = logging.getLogger(__name__)

INIT_STREAM = 2
# consecutive objective increases tolerated before giving up
MAX_GROWTH_EPOCHS = 10


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int, reason: str, trace: "TrainTrace | None" = None):
        super().__init__(f"training diverged at epoch {epoch}: {reason}")
        self.epoch = epoch
        self.trace = trace


@dataclass(frozen=True)
class TrainConfig:
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    seed: int = 0
    init_std: float = 0.1
    log_every: int = 50

    def __post_init__(self):
        if self.init_std < 0:
            raise ValueError("init_std must be non-negative")
        if self.log_every < 1:
            raise ValueError("log_every must be positive")


@dataclass
class TrainTrace:
    initial_objective: float = math.nan
    objective: list[float] = field(default_factory=list)
    grad_norm: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    termination: str = ""

    @property
    def epochs(self) -> int:
        return len(self.objective)

    @property
    def final_objective(self) -> float:
        return self.objective[-1] if self.objective else self.initial_objective


def init_factors(n: int, m: int, K: int, seed: int = 0, init_std: float = 0.1) -> LatentFactors:
    """I.i.d. zero-mean Gaussian factors, drawn in ``W, Z, E, F, C, O, S, U`` order."""
    if min(n, m, K) < 1:
        raise ValueError(f"n, m, K must be >= 1, got {(n, m, K)}")
    rng = np.random.default_rng([seed, INIT_STREAM])
    mats = {}
    for name in FACTOR_NAMES:
        rows = n if name in USER_FACTORS else m
        mats[name] = rng.normal(0.0, 1.0, size=(rows, K)) * init_std
    return LatentFactors(**mats)


def fit(channels: Mapping[str, FeedbackChannel], config: TrainConfig,
        factors: LatentFactors | None = None) -> tuple[LatentFactors, TrainTrace]:
    """Minimize the fused objective by simultaneous full-batch updates.

    Every epoch steps all active factor matrices from one gradient snapshot,
    ``X <- X - lr * dPhi/dX``.  Stops when the relative objective change drops
    below ``conv_tol`` or after ``max_epochs``.  Raises
    :class:`DivergenceError` when the objective turns non-finite or grows for
    ten epochs in a row.
    """
    hp = config.hp
    R = channels["R"]
    n, m = R.shape
    if factors is None:
        factors = init_factors(n, m, hp.K, config.seed, config.init_std)
    else:
        factors = factors.copy()
    weights = CountWeights.from_channels(channels, n, m)
    prepared = _prepare(channels, factors)
    updated = sorted({name for kind in active_blocks(hp) for name in BLOCKS[kind][:2]}, key=FACTOR_NAMES.index)
    lr = hp.learning_rate

    trace = TrainTrace()
    start = time.perf_counter()
    phi_prev, grad = _evaluate(factors, prepared, weights, hp, want_grad=True)
    trace.initial_objective = phi_prev
    if not math.isfinite(phi_prev):
        raise DivergenceError(0, "non-finite initial objective", trace)
    growth = 0

    for epoch in range(1, hp.max_epochs + 1):
        gnorm = math.sqrt(sum(float(np.sum(getattr(grad, k) ** 2)) for k in updated))
        for k in updated:
            getattr(factors, k).__isub__(lr * getattr(grad, k))
        phi, grad = _evaluate(factors, prepared, weights, hp, want_grad=True)
        trace.objective.append(phi)
        trace.grad_norm.append(gnorm)
        trace.seconds.append(time.perf_counter() - start)

        if not math.isfinite(phi) or not factors.all_finite():
            trace.termination = "diverged"
            raise DivergenceError(epoch, "objective is not finite", trace)
        growth = growth + 1 if phi > phi_prev else 0
        if growth >= MAX_GROWTH_EPOCHS:
            trace.termination = "diverged"
            raise DivergenceError(epoch, f"objective grew for {growth} consecutive epochs", trace)
        if epoch % config.log_every == 0:
            logger.info("epoch %d objective %.6g grad_norm %.3g", epoch, phi, gnorm)
        if abs(phi - phi_prev) / max(phi_prev, 1e-12) < hp.conv_tol:
            trace.termination = "converged"
            return factors, trace
        phi_prev = phi

    trace.termination = "max_epochs"
    return factors, trace


def write_trace_csv(trace: TrainTrace, path: str | Path) -> None:
    """``epoch,objective,grad_norm,seconds``; epoch 0 is the initial state."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "objective", "grad_norm", "seconds"])
        w.writerow([0, repr(trace.initial_objective), "", "0.0"])
        for e, (phi, g, s) in enumerate(zip(trace.objective, trace.grad_norm, trace.seconds), 1):
            w.writerow([e, repr(phi), repr(g), f"{s:.6f}"])
