"""Two-point directional estimators and the probing subroutines.

All estimators mutate ``theta`` in place (+eps, -2eps, +eps) and only keep
seeds between evaluations.  The guiding vector is the one exception: it is
materialized once per step because it mixes several directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from zoguide.errors import ConfigError, EstimationError
from zoguide.prng import add_scaled_in_place, derive_seed, gaussian_stream, perturb_in_place


@dataclass(frozen=True)
class Minibatch:
    indices: np.ndarray

    @property
    def size(self) -> int:
        return int(self.indices.shape[0])


class LossOracle:
    """Wraps ``loss(theta, batch)`` and counts forward passes."""

    def __init__(self, loss):
        self._loss = loss
        self.forward_passes = 0

    def __call__(self, theta: np.ndarray, batch: Minibatch | None) -> float:
        self.forward_passes += 1
        return float(self._loss(theta, batch))


@dataclass(frozen=True)
class ProbeRecord:
    loss: float
    seed: int
    index: int


@dataclass
class GuidingVector:
    values: np.ndarray
    probe_count: int
    split_ratio: float
    probes: list[ProbeRecord] = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class DirectionalEstimate:
    """``coefficient * direction``; the direction is a seed or a guiding vector."""

    coefficient: float
    loss_plus: float
    loss_minus: float
    seed: int | None = None
    guide: GuidingVector | None = None

    @property
    def train_loss(self) -> float:
        return 0.5 * (self.loss_plus + self.loss_minus)


def elite_count(probe_count: int, split_ratio: float) -> int:
    # Small guard so that e.g. 0.29 * 100 is not floored to 28.
    return int(math.floor(split_ratio * probe_count + 1e-9))


def _coefficient(loss_plus: float, loss_minus: float, eps: float) -> float:
    if not (math.isfinite(loss_plus) and math.isfinite(loss_minus)):
        raise EstimationError("non-finite loss in two-point estimate", (loss_plus, loss_minus))
    return (loss_plus - loss_minus) / (2.0 * eps)


def _check_eps(eps: float) -> None:
    if not eps > 0:
        raise ConfigError(f"perturbation scale must be positive, got {eps}")


def spsa_estimate(oracle, theta, eps, seed, batch, directions=None) -> DirectionalEstimate:
    """Central difference along the direction regenerated from ``seed``."""
    _check_eps(eps)
    perturb_in_place(theta, eps, seed, directions)
    loss_plus = oracle(theta, batch)
    perturb_in_place(theta, -2.0 * eps, seed, directions)
    loss_minus = oracle(theta, batch)
    perturb_in_place(theta, eps, seed, directions)
    return DirectionalEstimate(_coefficient(loss_plus, loss_minus, eps), loss_plus, loss_minus, seed=seed)


def spsa_estimate_multi(oracle, theta, eps, master_seed, batch, q, directions=None):
    """Average of ``q`` single-direction estimates, materialized as a d-vector.

    Returns ``(gradient_estimate, mean_loss)``; uses ``2q`` forward passes.
    """
    if q < 1:
        raise ConfigError(f"query count must be >= 1, got {q}")
    gen = gaussian_stream if directions is None else directions
    total = np.zeros_like(theta)
    mean_loss = 0.0
    for i in range(1, q + 1):
        seed = derive_seed(master_seed, i)
        est = spsa_estimate(oracle, theta, eps, seed, batch, directions)
        total += est.coefficient * np.asarray(gen(seed, theta.shape[0]))
        mean_loss += est.train_loss
    return total / q, mean_loss / q


def _probe(oracle, theta, eps, seed, batch, directions, index) -> ProbeRecord:
    perturb_in_place(theta, eps, seed, directions)
    loss = oracle(theta, batch)
    perturb_in_place(theta, -eps, seed, directions)
    if not math.isfinite(loss):
        raise EstimationError(f"non-finite loss at probe {index}", (loss,))
    return ProbeRecord(loss, seed, index)


def probe_losses(oracle, theta, probe_count, eps, seed, batch, directions=None) -> list[ProbeRecord]:
    """One-sided probes ``L(theta + eps z_i)`` for ``i = 1..probe_count``."""
    _check_eps(eps)
    return [
        _probe(oracle, theta, eps, derive_seed(seed, i), batch, directions, i)
        for i in range(1, probe_count + 1)
    ]


def compute_guiding_vector(
    oracle, theta, probe_count, split_ratio, eps, seed, batch, directions=None, normalize=False
) -> GuidingVector:
    """Mean of the lowest-loss probe directions minus the mean of the rest.

    The elite group holds the ``floor(split_ratio * probe_count)`` probes with
    the smallest loss (ties go to the lower probe index).  Costs exactly
    ``probe_count`` forward passes.
    """
    n_elite = elite_count(probe_count, split_ratio)
    if probe_count < 2 or not 1 <= n_elite <= probe_count - 1:
        raise ConfigError(
            f"elite split floor(alpha*M) = {n_elite} must lie in [1, M-1] "
            f"(M={probe_count}, alpha={split_ratio})"
        )
    gen = gaussian_stream if directions is None else directions
    probes = probe_losses(oracle, theta, probe_count, eps, seed, batch, directions)
    ranked = sorted(probes, key=lambda p: (p.loss, p.index))

    d = theta.shape[0]
    top = np.zeros(d)
    for p in ranked[:n_elite]:
        top += np.asarray(gen(p.seed, d))
    bottom = np.zeros(d)
    for p in ranked[n_elite:]:
        bottom += np.asarray(gen(p.seed, d))
    v = top / n_elite - bottom / (probe_count - n_elite)
    if normalize:
        norm = np.linalg.norm(v)
        if norm > 0:
            v /= norm
    return GuidingVector(v, probe_count, split_ratio, probes)


def gv_estimate(oracle, theta, eps, guide: GuidingVector, batch) -> DirectionalEstimate:
    _check_eps(eps)
    v = guide.values
    add_scaled_in_place(theta, eps, v)
    loss_plus = oracle(theta, batch)
    add_scaled_in_place(theta, -2.0 * eps, v)
    loss_minus = oracle(theta, batch)
    add_scaled_in_place(theta, eps, v)
    return DirectionalEstimate(_coefficient(loss_plus, loss_minus, eps), loss_plus, loss_minus, guide=guide)


def compute_greedy_perturbation(oracle, theta, probe_count, eps, seed, batch, directions=None):
    """Seed of the probe with the lowest one-sided loss, and that loss."""
    if probe_count < 1:
        raise ConfigError(f"probe count must be >= 1, got {probe_count}")
    probes = probe_losses(oracle, theta, probe_count, eps, seed, batch, directions)
    best = min(probes, key=lambda p: (p.loss, p.index))
    return best.seed, best.loss


def greedy_estimate(oracle, theta, eps, best_seed, batch, directions=None) -> DirectionalEstimate:
    return spsa_estimate(oracle, theta, eps, best_seed, batch, directions)
