"""Desk-scale objectives with analytic gradients.

Deterministic problems (quadratic, Rosenbrock) ignore the minibatch argument.
Dataset problems hold a train/validation split and draw minibatches from the
training part.  All data is generated from the SplitMix64 streams so that a
problem seed fully determines the instance.
"""

from __future__ import annotations

import numpy as np

from zoguide.errors import ConfigError
from zoguide.estimators import Minibatch
from zoguide.prng import (
    DATA_STREAM,
    INIT_STREAM,
    SplitMix64,
    batch_seed,
    derive_seed,
    gaussian_stream,
    uniforms,
)


def finite_difference_gradient(fn, theta: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central differences of ``fn`` at ``theta`` with step ``h``."""
    theta = np.array(theta, dtype=np.float64)
    grad = np.empty_like(theta)
    for j in range(theta.shape[0]):
        old = theta[j]
        theta[j] = old + h
        up = fn(theta)
        theta[j] = old - h
        down = fn(theta)
        theta[j] = old
        grad[j] = (up - down) / (2.0 * h)
    return grad


class Problem:
    """Common surface used by the optimizers and the harness."""

    name = "problem"
    dim: int

    def loss(self, theta, batch=None) -> float:
        raise NotImplementedError

    def true_gradient(self, theta, batch=None) -> np.ndarray:
        return finite_difference_gradient(lambda x: self.loss(x, batch), theta)

    def initial_point(self) -> np.ndarray:
        return np.zeros(self.dim)

    def sample_batch(self, master_seed: int, t: int, batch_size: int) -> Minibatch | None:
        return None

    def train_loss(self, theta) -> float:
        """Loss over the whole training split."""
        return self.loss(theta, None)

    def eval_loss(self, theta) -> float:
        """Loss over the held-out split (same as training for deterministic problems)."""
        return self.loss(theta, None)


class QuadraticProblem(Problem):
    """``0.5 * sum(a_i x_i^2)`` with ``a`` log-spaced in ``[1, kappa]``."""

    name = "quadratic"

    def __init__(self, d: int, condition_number: float = 10.0, seed: int = 0):
        if d < 1 or condition_number < 1:
            raise ConfigError(f"quadratic needs d >= 1 and kappa >= 1, got d={d}, kappa={condition_number}")
        self.dim = d
        self.seed = seed
        self.eigenvalues = np.logspace(0.0, np.log10(condition_number), d) if d > 1 else np.ones(1)

    def loss(self, theta, batch=None):
        return 0.5 * float(np.dot(self.eigenvalues * theta, theta))

    def true_gradient(self, theta, batch=None):
        return self.eigenvalues * theta

    def initial_point(self):
        return gaussian_stream(derive_seed(self.seed, INIT_STREAM), self.dim)


class RosenbrockProblem(Problem):
    name = "rosenbrock"

    def __init__(self, d: int):
        if d < 2:
            raise ConfigError(f"rosenbrock needs d >= 2, got {d}")
        self.dim = d

    def loss(self, theta, batch=None):
        x, y = theta[:-1], theta[1:]
        return float(np.sum(100.0 * (y - x * x) ** 2 + (1.0 - x) ** 2))

    def true_gradient(self, theta, batch=None):
        x, y = theta[:-1], theta[1:]
        inner = y - x * x
        grad = np.zeros_like(theta)
        grad[:-1] = -400.0 * x * inner - 2.0 * (1.0 - x)
        grad[1:] += 200.0 * inner
        return grad


class DatasetProblem(Problem):
    """Problem whose loss is a mean over examples; first ``n_train`` rows train."""

    n_train: int
    n_examples: int

    def _rows(self, batch):
        if batch is None:
            return np.arange(self.n_train)
        return batch.indices

    def sample_batch(self, master_seed, t, batch_size):
        size = min(batch_size, self.n_train)
        idx = SplitMix64(batch_seed(master_seed, t)).sample_without_replacement(self.n_train, size)
        return Minibatch(idx)

    def eval_loss(self, theta):
        return self.loss(theta, Minibatch(np.arange(self.n_train, self.n_examples)))


def _split(n_examples: int, val_fraction: float) -> int:
    n_val = int(round(n_examples * val_fraction))
    if n_examples < 2 or not 1 <= n_val < n_examples:
        raise ConfigError(f"cannot split {n_examples} examples with val_fraction={val_fraction}")
    return n_examples - n_val


class LogisticRegressionProblem(DatasetProblem):
    """Mean binary cross-entropy on a planted linear classifier with label flips."""

    name = "logreg"

    def __init__(self, d: int, n_examples: int = 1500, label_noise: float = 0.1, seed: int = 0,
                 val_fraction: float = 1 / 3):
        if d < 1 or not 0 <= label_noise < 0.5:
            raise ConfigError(f"logreg needs d >= 1 and label_noise in [0, 0.5), got {d}, {label_noise}")
        self.dim = d
        self.n_examples = n_examples
        self.n_train = _split(n_examples, val_fraction)
        self.features = gaussian_stream(derive_seed(seed, DATA_STREAM + 1), n_examples * d).reshape(n_examples, d)
        planted = gaussian_stream(derive_seed(seed, DATA_STREAM + 2), d)
        self.planted = planted / np.linalg.norm(planted)
        labels = (self.features @ self.planted > 0).astype(np.float64)
        flips = uniforms(derive_seed(seed, DATA_STREAM + 3), n_examples) <= label_noise
        self.labels = np.where(flips, 1.0 - labels, labels)

    def loss(self, theta, batch=None):
        rows = self._rows(batch)
        logits = self.features[rows] @ theta
        # log(1 + e^s) - y s, written stably
        return float(np.mean(np.logaddexp(0.0, logits) - self.labels[rows] * logits))

    def true_gradient(self, theta, batch=None):
        rows = self._rows(batch)
        x = self.features[rows]
        p = 0.5 * (1.0 + np.tanh(0.5 * (x @ theta)))
        return x.T @ (p - self.labels[rows]) / rows.shape[0]


class LoRALinearProblem(DatasetProblem):
    """Linear regression through a frozen base ``W`` plus a trainable ``B @ A``.

    ``theta`` is ``vec(B)`` followed by ``vec(A)`` (row-major), ``B`` is
    ``m x r`` and ``A`` is ``r x n``.  Targets come from a planted
    ``W + B* @ A*``; the loss is the mean squared error over examples and
    outputs.
    """

    name = "lora"

    def __init__(self, m: int, n: int, r: int, n_examples: int = 600, seed: int = 0,
                 val_fraction: float = 1 / 3):
        if not 1 <= r <= min(m, n):
            raise ConfigError(f"rank r={r} must lie in [1, min(m, n)={min(m, n)}]")
        self.m, self.n, self.r = m, n, r
        self.dim = r * (m + n)
        self.seed = seed
        self.n_examples = n_examples
        self.n_train = _split(n_examples, val_fraction)

        def normals(k, count):
            return gaussian_stream(derive_seed(seed, DATA_STREAM + k), count)

        self.base = normals(1, m * n).reshape(m, n) / np.sqrt(n)
        b_star = normals(2, m * r).reshape(m, r)
        a_star = normals(3, r * n).reshape(r, n) / np.sqrt(n)
        self.target_weight = self.base + b_star @ a_star
        self.inputs = normals(4, n_examples * n).reshape(n_examples, n)
        self.targets = self.inputs @ self.target_weight.T

    def unpack(self, theta):
        split = self.m * self.r
        return theta[:split].reshape(self.m, self.r), theta[split:].reshape(self.r, self.n)

    def pack(self, b, a):
        return np.concatenate([np.ravel(b), np.ravel(a)])

    def effective_weight(self, theta):
        b, a = self.unpack(theta)
        return self.base + b @ a

    def _residual(self, theta, rows):
        return self.inputs[rows] @ self.effective_weight(theta).T - self.targets[rows]

    def loss(self, theta, batch=None):
        res = self._residual(theta, self._rows(batch))
        return float(np.mean(res * res))

    def true_gradient(self, theta, batch=None):
        rows = self._rows(batch)
        res = self._residual(theta, rows)
        # dL/dW' for L = mean(res**2) over rows x outputs
        grad_w = 2.0 * res.T @ self.inputs[rows] / res.size
        b, a = self.unpack(theta)
        return self.pack(grad_w @ a.T, b.T @ grad_w)

    def initial_point(self):
        a = gaussian_stream(derive_seed(self.seed, INIT_STREAM), self.r * self.n).reshape(self.r, self.n)
        return self.pack(np.zeros((self.m, self.r)), a / np.sqrt(self.n))


def quadratic_problem(d, condition_number=10.0, seed=0):
    return QuadraticProblem(d, condition_number, seed)


def rosenbrock_problem(d):
    return RosenbrockProblem(d)


def logreg_synthetic(d, n_examples=1500, label_noise=0.1, seed=0, val_fraction=1 / 3):
    return LogisticRegressionProblem(d, n_examples, label_noise, seed, val_fraction)


def lora_linear_problem(m, n, r, n_examples=600, seed=0, val_fraction=1 / 3):
    return LoRALinearProblem(m, n, r, n_examples, seed, val_fraction)


PROBLEMS = {
    "quadratic": quadratic_problem,
    "rosenbrock": rosenbrock_problem,
    "logreg": logreg_synthetic,
    "lora": lora_linear_problem,
}


def make_problem(kind: str, **params) -> Problem:
    try:
        factory = PROBLEMS[kind]
    except KeyError:
        raise ConfigError(f"unknown problem kind {kind!r}; expected one of {sorted(PROBLEMS)}") from None
    try:
        return factory(**params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for problem {kind!r}: {exc}") from None
