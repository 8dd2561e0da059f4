"""MeZO, MeZO with a guiding vector, and MeZO with greedy perturbation.

Per-step forward passes: ``2q`` for MeZO, ``M + 2`` for the two prior-informed
variants.  Step ``t`` draws its probe seeds from ``step_seed(master_seed, t)``
so MeZO's single direction and the first greedy probe coincide.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass

import numpy as np

from zoguide.errors import ConfigError, NumericOverflowError
from zoguide.estimators import (
    LossOracle,
    compute_greedy_perturbation,
    compute_guiding_vector,
    elite_count,
    greedy_estimate,
    gv_estimate,
    spsa_estimate,
    spsa_estimate_multi,
)
from zoguide.prng import add_scaled_in_place, derive_seed, perturb_in_place, step_seed
from zoguide.trace import RunSummary, TraceRow, cosine_similarity, emit_csv, materialize_estimate

log = logging.getLogger(__name__)

VARIANTS = ("mezo", "mezo_gv", "mezo_greedy")


@dataclass
class OptimizerConfig:
    variant: str = "mezo"
    epsilon: float = 1e-3
    learning_rate: float = 1e-3
    weight_decay: float = 0.0
    steps: int = 1000
    probe_count: int = 4
    split_ratio: float = 0.5
    query_budget: int = 1
    eval_every: int = 1000
    normalize_gv: bool = False
    master_seed: int = 0
    batch_size: int = 16
    full_data_cos: bool = False

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        for name in ("epsilon", "learning_rate", "weight_decay", "split_ratio"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise ConfigError(f"{name} must be a finite number, got {value!r}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be > 0, got {self.epsilon}")
        if self.learning_rate < 0 or self.weight_decay < 0:
            raise ConfigError("learning_rate and weight_decay must be >= 0")
        if not 0 < self.split_ratio < 1:
            raise ConfigError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        for name in ("probe_count", "query_budget", "eval_every", "batch_size"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.steps < 0:
            raise ConfigError(f"steps must be >= 0, got {self.steps}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be a 64-bit unsigned integer")
        if self.variant == "mezo_gv":
            n_elite = elite_count(self.probe_count, self.split_ratio)
            if not 1 <= n_elite <= self.probe_count - 1:
                raise ConfigError(
                    f"mezo_gv needs 1 <= floor(alpha*M) <= M-1; got floor({self.split_ratio}*"
                    f"{self.probe_count}) = {n_elite}"
                )

    @property
    def passes_per_step(self) -> int:
        return 2 * self.query_budget if self.variant == "mezo" else self.probe_count + 2

    def replace(self, **changes) -> "OptimizerConfig":
        return dataclasses.replace(self, **changes)


@dataclass
class StepReport:
    step: int
    train_loss: float
    coefficient: float
    forward_passes: int
    wall_ms: int = 0
    cos_sim: float | None = None


@dataclass
class OptimizerState:
    """Everything an optimizer carries between steps; deliberately no d-vectors."""

    step: int = 0
    forward_passes: int = 0


@dataclass
class TrainingRun:
    theta: np.ndarray
    rows: list
    summary: RunSummary


def steps_for_budget(cfg: OptimizerConfig, budget: int) -> int:
    return budget // cfg.passes_per_step


def _decay(theta, cfg):
    if cfg.weight_decay:
        theta *= 1.0 - cfg.learning_rate * cfg.weight_decay


def _cos(estimate_vector, gradient, theta):
    if gradient is None:
        return None
    return cosine_similarity(estimate_vector, gradient(theta))


def mezo_step(theta, oracle, batch, cfg, t, directions=None, gradient=None) -> StepReport:
    """One ZO-SGD step; ``gradient(theta)`` (optional) enables the cosine diagnostic."""
    seed = step_seed(cfg.master_seed, t)
    if cfg.query_budget == 1:
        est = spsa_estimate(oracle, theta, cfg.epsilon, derive_seed(seed, 1), batch, directions)
        cos = _cos(materialize_estimate(est, theta.shape[0], directions), gradient, theta) if gradient else None
        _decay(theta, cfg)
        perturb_in_place(theta, -cfg.learning_rate * est.coefficient, est.seed, directions)
        return StepReport(t, est.train_loss, est.coefficient, oracle.forward_passes, cos_sim=cos)

    grad, loss = spsa_estimate_multi(oracle, theta, cfg.epsilon, seed, batch, cfg.query_budget, directions)
    cos = _cos(grad, gradient, theta)
    _decay(theta, cfg)
    add_scaled_in_place(theta, -cfg.learning_rate, grad)
    return StepReport(t, loss, float(np.linalg.norm(grad)), oracle.forward_passes, cos_sim=cos)


def mezo_gv_step(theta, oracle, batch, cfg, t, directions=None, gradient=None) -> StepReport:
    seed = step_seed(cfg.master_seed, t)
    guide = compute_guiding_vector(
        oracle, theta, cfg.probe_count, cfg.split_ratio, cfg.epsilon, seed, batch,
        directions, normalize=cfg.normalize_gv,
    )
    est = gv_estimate(oracle, theta, cfg.epsilon, guide, batch)
    cos = _cos(materialize_estimate(est, theta.shape[0]), gradient, theta) if gradient else None
    _decay(theta, cfg)
    add_scaled_in_place(theta, -cfg.learning_rate * est.coefficient, guide.values)
    return StepReport(t, est.train_loss, est.coefficient, oracle.forward_passes, cos_sim=cos)


def mezo_greedy_step(theta, oracle, batch, cfg, t, directions=None, gradient=None) -> StepReport:
    seed = step_seed(cfg.master_seed, t)
    best_seed, _ = compute_greedy_perturbation(oracle, theta, cfg.probe_count, cfg.epsilon, seed, batch, directions)
    est = greedy_estimate(oracle, theta, cfg.epsilon, best_seed, batch, directions)
    cos = _cos(materialize_estimate(est, theta.shape[0], directions), gradient, theta) if gradient else None
    _decay(theta, cfg)
    perturb_in_place(theta, -cfg.learning_rate * est.coefficient, best_seed, directions)
    return StepReport(t, est.train_loss, est.coefficient, oracle.forward_passes, cos_sim=cos)


STEP_FUNCTIONS = {
    "mezo": mezo_step,
    "mezo_gv": mezo_gv_step,
    "mezo_greedy": mezo_greedy_step,
}


def run_training(problem, cfg: OptimizerConfig, theta=None, directions=None, trace_path=None,
                 timing=True) -> TrainingRun:
    """Run ``cfg.steps`` steps of ``cfg.variant`` on ``problem``.

    Validation loss and the cosine diagnostic are recorded every
    ``cfg.eval_every`` steps and at the last step.  If a step raises, the rows
    collected so far are written to ``trace_path`` before re-raising.
    """
    theta = problem.initial_point() if theta is None else np.array(theta, dtype=np.float64)
    step = STEP_FUNCTIONS[cfg.variant]
    oracle = LossOracle(problem.loss)
    state = OptimizerState()
    rows = []
    initial_train = problem.train_loss(theta)

    try:
        for t in range(1, cfg.steps + 1):
            start = time.perf_counter()
            batch = problem.sample_batch(cfg.master_seed, t, cfg.batch_size)
            evaluate = t % cfg.eval_every == 0 or t == cfg.steps
            gradient = None
            if evaluate:
                grad_batch = None if cfg.full_data_cos else batch
                gradient = lambda th, b=grad_batch: problem.true_gradient(th, b)  # noqa: E731
            report = step(theta, oracle, batch, cfg, t, directions, gradient)
            eval_loss = problem.eval_loss(theta) if evaluate else None
            state.step, state.forward_passes = t, oracle.forward_passes
            wall_ms = int(round((time.perf_counter() - start) * 1000)) if timing else 0
            rows.append(TraceRow(t, report.forward_passes, report.train_loss, eval_loss, report.cos_sim, wall_ms))
    except (ArithmeticError, NumericOverflowError):
        log.error("run aborted at step %d (variant=%s, seed=%d)", state.step + 1, cfg.variant, cfg.master_seed)
        if trace_path is not None:
            emit_csv(rows, trace_path)
        raise

    if trace_path is not None:
        emit_csv(rows, trace_path)

    cos_values = [r.cos_sim for r in rows if r.cos_sim is not None]
    summary = RunSummary(
        config=dataclasses.asdict(cfg),
        steps=state.step,
        forward_passes=oracle.forward_passes,
        final_train_loss=problem.train_loss(theta),
        final_eval_loss=problem.eval_loss(theta),
        initial_train_loss=initial_train,
        checkpoints=[
            {"step": r.step, "train_loss": r.train_loss, "eval_loss": r.eval_loss}
            for r in rows if r.step % 1000 == 0
        ],
        mean_cos_sim=float(np.mean(cos_values)) if cos_values else None,
    )
    return TrainingRun(theta, rows, summary)
