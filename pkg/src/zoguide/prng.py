"""Seed derivation, Gaussian streams and in-place perturbation.

Every random direction used by the optimizers is regenerated from a 64-bit
seed instead of being stored.  The generator is SplitMix64 and normals come
from Box-Muller over consecutive outputs, so a (seed, d) pair always
reproduces the same array bit for bit.
"""

from __future__ import annotations

import numpy as np

from zoguide.errors import NumericOverflowError

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

# Reserved probe-index ranges so that step, minibatch and initialization
# streams derived from one master seed never share an index.
STEP_STREAM = 1 << 40
BATCH_STREAM = 2 << 40
INIT_STREAM = 3 << 40
DATA_STREAM = 4 << 40

_U64 = np.uint64
_TWO_PI = 2.0 * np.pi


def splitmix64_next(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 state; returns ``(output, next_state)``."""
    state = (state + GOLDEN_GAMMA) & MASK64
    z = state
    z = ((z ^ (z >> 30)) * MIX1) & MASK64
    z = ((z ^ (z >> 27)) * MIX2) & MASK64
    return z ^ (z >> 31), state


def derive_seed(seed: int, index: int) -> int:
    """Child seed for probe ``index`` of ``seed``: SplitMix64 of ``seed ^ index``."""
    if index < 1:
        raise ValueError(f"probe index must be >= 1, got {index}")
    out, _ = splitmix64_next((int(seed) ^ int(index)) & MASK64)
    return out


def step_seed(master_seed: int, t: int) -> int:
    return derive_seed(master_seed, STEP_STREAM + t)


def batch_seed(master_seed: int, t: int) -> int:
    return derive_seed(master_seed, BATCH_STREAM + t)


_SHIFT11, _SHIFT27, _SHIFT30, _SHIFT31 = (np.array(k, dtype=_U64) for k in (11, 27, 30, 31))
_MIX1 = np.array(MIX1, dtype=_U64)
_MIX2 = np.array(MIX2, dtype=_U64)
_gamma_multiples = np.zeros(0, dtype=_U64)


def _gamma_steps(n: int) -> np.ndarray:
    # Cached j * gamma (mod 2**64) for j = 1..n, grown on demand.
    global _gamma_multiples
    if _gamma_multiples.shape[0] < n:
        size = max(n, 2 * _gamma_multiples.shape[0], 1024)
        with np.errstate(over="ignore"):
            _gamma_multiples = np.arange(1, size + 1, dtype=_U64) * _U64(GOLDEN_GAMMA)
        _gamma_multiples.setflags(write=False)
    return _gamma_multiples[:n]


def splitmix64_outputs(seed: int, n: int) -> np.ndarray:
    """The first ``n`` SplitMix64 outputs starting from state ``seed``."""
    # The state after j steps is seed + j * gamma (mod 2**64), so the whole
    # stream can be produced without a Python loop.
    z = _gamma_steps(n) + _U64(int(seed) & MASK64)
    z ^= z >> _SHIFT30
    z *= _MIX1
    z ^= z >> _SHIFT27
    z *= _MIX2
    z ^= z >> _SHIFT31
    return z


def uniforms(seed: int, n: int) -> np.ndarray:
    """``n`` doubles in (0, 1] from the top 53 bits of each output."""
    out = splitmix64_outputs(seed, n)
    out >>= _SHIFT11
    u = out.astype(np.float64)
    u *= -(2.0**-53)
    u += 1.0
    return u


def gaussian_stream(seed: int, d: int) -> np.ndarray:
    """Length-``d`` array of standard normals regenerated from ``seed``.

    Uniform pairs ``(u1, u2)`` map to ``r cos(2 pi u2), r sin(2 pi u2)`` with
    ``r = sqrt(-2 ln u1)``; the values are interleaved and an odd ``d`` drops
    the last sine term.
    """
    if d < 1:
        raise ValueError(f"dimension must be >= 1, got {d}")
    pairs = (d + 1) // 2
    u = uniforms(seed, 2 * pairs)
    r = np.log(u[0::2])
    r *= -2.0
    np.sqrt(r, out=r)
    angle = u[1::2] * _TWO_PI
    z = np.empty(2 * pairs, dtype=np.float64)
    np.multiply(r, np.cos(angle), out=z[0::2])
    np.multiply(r, np.sin(angle), out=z[1::2])
    return z[:d]


def _check_finite(theta: np.ndarray) -> None:
    if not np.isfinite(theta).all():
        bad = int(np.flatnonzero(~np.isfinite(theta))[0])
        raise NumericOverflowError(bad, float(theta[bad]))


def perturb_in_place(theta: np.ndarray, scale: float, seed: int, directions=None) -> None:
    """``theta += scale * z`` with ``z`` regenerated from ``seed``.

    ``directions(seed, d)`` replaces the Gaussian stream; tests use it to pin
    directions to hand-picked vectors.
    """
    gen = gaussian_stream if directions is None else directions
    z = np.asarray(gen(seed, theta.shape[0]), dtype=np.float64)
    with np.errstate(over="ignore", invalid="ignore"):
        theta += scale * z
    _check_finite(theta)


def add_scaled_in_place(theta: np.ndarray, scale: float, v: np.ndarray) -> None:
    """``theta += scale * v`` for a materialized direction ``v``."""
    if v.shape != theta.shape:
        raise ValueError(f"direction has shape {v.shape}, parameters have {theta.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        theta += scale * v
    _check_finite(theta)


class SplitMix64:
    """Sequential SplitMix64 generator for integer draws (minibatch sampling)."""

    def __init__(self, seed: int):
        self.state = int(seed) & MASK64

    def next(self) -> int:
        out, self.state = splitmix64_next(self.state)
        return out

    def randbelow(self, n: int) -> int:
        # Lemire's multiply-shift with rejection; unbiased for any n < 2**64.
        threshold = (1 << 64) % n
        while True:
            m = self.next() * n
            if (m & MASK64) >= threshold:
                return m >> 64

    def sample_without_replacement(self, n: int, k: int) -> np.ndarray:
        """``k`` distinct indices from ``range(n)`` by a partial Fisher-Yates shuffle."""
        if not 1 <= k <= n:
            raise ValueError(f"cannot draw {k} distinct items from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.randbelow(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return np.array(pool[:k], dtype=np.int64)
