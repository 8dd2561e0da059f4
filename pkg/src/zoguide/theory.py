"""Monte Carlo checks of the directional-alignment ratios.

Each trial draws ``k`` Gaussian directions, forms an estimate ``V`` of a unit
gradient ``g`` and splits it into ``V_par = (V.g) g`` and ``V_perp``:

* ``ratio1 = |V_par| / |V_perp|``
* ``ratio2 = |V_par| / |g| = |V.g|``

Two samplers are provided.  ``mode="full"`` materializes every ``z_i`` and
works for any ``g``.  ``mode="reduced"`` exploits rotational invariance: with
``g = e1`` every estimate has the form ``a e1 + b (0, w)`` where ``a, b``
depend only on the projections ``Y_i = z_i.g`` and ``w ~ N(0, I_{d-1})`` is
independent of them, so a trial needs ``k + d - 1`` normals instead of
``k d``.

Trials are processed in fixed-size blocks, block ``b`` seeded with
``derive_seed(seed, b + 1)``; results do not depend on the worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from zoguide.errors import ConfigError
from zoguide.prng import derive_seed, gaussian_stream

REDUCED_BLOCK = 1024
FULL_BLOCK = 128
LEMMA1_BLOCK = 25
MAX_LEMMA1_DIM = 512

# stream indices inside a block seed
_Y_STREAM, _W_STREAM, _Z_STREAM, _X0_STREAM = 1, 2, 3, 4


@dataclass
class LemmaConfig:
    d: int
    k: int
    trials: int
    seed: int = 0
    sigma: float = 0.5
    s: int | None = None

    def __post_init__(self):
        if self.d < 2:
            raise ConfigError(f"d must be >= 2, got {self.d}")
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.trials < 1:
            raise ConfigError(f"trials must be >= 1, got {self.trials}")

    @property
    def tail_size(self) -> int:
        return self.s if self.s is not None else int(math.floor(self.sigma * self.k))


@dataclass
class RatioReport:
    lemma: str
    d: int
    k: int
    trials: int
    ratio1_mean: float
    ratio1_ci95: list
    ratio2_mean: float
    ratio2_ci95: list
    parallel_mean: float
    parallel_ci95: list
    predicted_ratio1: float
    predicted_ratio2: float
    max_decomposition_error: float
    s: int | None = None
    extra: dict = field(default_factory=dict)


@dataclass
class ConcentrationReport:
    d: int
    k: int
    trials: int
    spectral_norm_median: float
    spectral_norm_q95: float
    spectral_norm_mean: float


def mean_ci95(values) -> tuple[float, list]:
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    half = 1.96 * float(values.std(ddof=1)) / math.sqrt(values.size) if values.size > 1 else 0.0
    return mean, [mean - half, mean + half]


# ---------------------------------------------------------------------------
# spectral norm


def _power_norm(apply, x0, max_iter=200, tol=1e-8):
    """Largest |eigenvalue| of symmetric operators, batched over rows of ``x0``.

    Iterates on ``A^2`` so that eigenvalues of equal magnitude and opposite
    sign cannot stall the Rayleigh quotient.
    """
    x = x0 / np.linalg.norm(x0, axis=-1, keepdims=True)
    lam = np.zeros(x.shape[:-1])
    for _ in range(max_iter):
        y = apply(apply(x))
        new = np.einsum("...i,...i->...", x, y)
        norm = np.linalg.norm(y, axis=-1, keepdims=True)
        if np.all(norm == 0):
            return np.zeros_like(lam)
        x = y / np.where(norm == 0, 1.0, norm)
        done = np.all(np.abs(new - lam) <= tol * np.abs(new))
        lam = new
        if done:
            break
    return np.sqrt(np.maximum(lam, 0.0))


def spectral_norm(matrix, max_iter=200, tol=1e-8, seed=0) -> float:
    """Spectral norm of a symmetric matrix by power iteration."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    x0 = gaussian_stream(derive_seed(seed, _X0_STREAM), a.shape[0])
    return float(_power_norm(lambda x: a @ x, x0, max_iter, tol))


# ---------------------------------------------------------------------------
# block machinery


def _blocks(trials, block):
    return [(b, min(block, trials - b * block)) for b in range((trials + block - 1) // block)]


def _run_blocks(fn, args, trials, block, workers):
    tasks = [(args, b, n) for b, n in _blocks(trials, block)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(fn, tasks))
    else:
        parts = [fn(t) for t in tasks]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def _normals(seed, b, stream, shape):
    return gaussian_stream(derive_seed(derive_seed(seed, b + 1), stream), int(np.prod(shape))).reshape(shape)


# ---------------------------------------------------------------------------
# ratio lemmas


def _tail_scale(s, normalization):
    if normalization == "proof":
        return 1.0 / math.sqrt(s)
    if normalization == "mean":
        return 1.0 / s
    raise ConfigError(f"unknown normalization {normalization!r}")


def _estimate_from_projections(kind, y, s=None, normalization="proof"):
    """Coefficients ``(a, b, weights)`` with ``V.g = a`` and ``V_perp = sum_i weights_i z_i_perp``.

    ``b`` is the norm of the weight vector, i.e. the scale of ``V_perp`` in
    the reduced sampler.
    """
    n, k = y.shape
    if kind == "lemma2":
        weights = y / k
        a = np.sum(y * y, axis=1) / k
    elif kind == "lemma3":
        best = np.argmin(y, axis=1)
        y1 = y[np.arange(n), best]
        weights = np.zeros_like(y)
        weights[np.arange(n), best] = y1
        a = y1 * y1
    elif kind == "lemma4":
        order = np.argsort(y, axis=1, kind="stable")
        c = _tail_scale(s, normalization)
        signs = np.zeros_like(y)
        rows = np.arange(n)[:, None]
        signs[rows, order[:, :s]] = 1.0
        signs[rows, order[:, k - s:]] = -1.0
        proj = c * np.sum(signs * y, axis=1)  # z_hat . g
        weights = c * signs * proj[:, None]
        a = proj * proj
    else:
        raise ValueError(kind)
    return a, np.linalg.norm(weights, axis=1), weights


def _decompose(v, g):
    par_coef = v @ g
    v_par = np.outer(par_coef, g)
    v_perp = v - v_par
    n_par = np.linalg.norm(v_par, axis=1)
    n_perp = np.linalg.norm(v_perp, axis=1)
    total = np.einsum("ij,ij->i", v, v)
    err = np.abs(total - (n_par**2 + n_perp**2)) / np.where(total > 0, total, 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio1 = np.where(n_perp > 0, n_par / n_perp, np.inf)
    return par_coef, ratio1, n_par, err


def _ratio_block(task):
    (kind, d, k, s, seed, mode, g, normalization), b, n = task
    if mode == "reduced":
        y = _normals(seed, b, _Y_STREAM, (n, k))
        w = _normals(seed, b, _W_STREAM, (n, d - 1))
        a, scale, _ = _estimate_from_projections(kind, y, s, normalization)
        v = np.empty((n, d))
        v[:, 0] = a
        v[:, 1:] = scale[:, None] * w
        g = np.zeros(d)
        g[0] = 1.0
    else:
        z = _normals(seed, b, _Z_STREAM, (n, k, d))
        y = z @ g
        a, _, weights = _estimate_from_projections(kind, y, s, normalization)
        z_perp = z - y[:, :, None] * g
        v = a[:, None] * g + np.einsum("nk,nkd->nd", weights, z_perp)
    par, ratio1, ratio2, err = _decompose(v, g)
    return {"parallel": par, "ratio1": ratio1, "ratio2": ratio2, "err": err}


def _ratio_report(kind, cfg, mode, g, workers, s=None, normalization="proof", pred=(0.0, 0.0), extra=None):
    if mode not in ("reduced", "full"):
        raise ConfigError(f"unknown sampler mode {mode!r}")
    if g is None:
        g = np.zeros(cfg.d)
        g[0] = 1.0
    else:
        if mode == "reduced":
            raise ConfigError("a custom gradient direction needs mode='full'")
        g = np.asarray(g, dtype=np.float64)
        g = g / np.linalg.norm(g)
    block = REDUCED_BLOCK if mode == "reduced" else FULL_BLOCK
    args = (kind, cfg.d, cfg.k, s, cfg.seed, mode, g, normalization)
    out = _run_blocks(_ratio_block, args, cfg.trials, block, workers)
    r1, r1_ci = mean_ci95(out["ratio1"])
    r2, r2_ci = mean_ci95(out["ratio2"])
    par, par_ci = mean_ci95(out["parallel"])
    return RatioReport(
        lemma=kind, d=cfg.d, k=cfg.k, trials=cfg.trials, s=s,
        ratio1_mean=r1, ratio1_ci95=r1_ci, ratio2_mean=r2, ratio2_ci95=r2_ci,
        parallel_mean=par, parallel_ci95=par_ci,
        predicted_ratio1=pred[0], predicted_ratio2=pred[1],
        max_decomposition_error=float(out["err"].max()),
        extra=dict(extra or {}, mode=mode),
    )


def lemma2_ratios(cfg: LemmaConfig, mode="reduced", g=None, workers=1) -> RatioReport:
    """Plain averaged estimator ``V = (1/k) sum z_i z_i^T g``."""
    pred = (math.sqrt(cfg.k / (cfg.d - 1)), 1.0)
    return _ratio_report("lemma2", cfg, mode, g, workers, pred=pred)


def lemma3_ratios(cfg: LemmaConfig, mode="reduced", g=None, workers=1) -> RatioReport:
    """Greedy estimator ``V = z z^T g`` for the ``z`` with the smallest projection."""
    two_log_k = 2.0 * math.log(cfg.k)
    pred = (math.sqrt(two_log_k) / math.sqrt(cfg.d - 1), two_log_k)
    _, second = exact_min_order_stat(cfg.k)
    return _ratio_report("lemma3", cfg, mode, g, workers, pred=pred, extra={"exact_second_moment": second})


def lemma4_ratios(cfg: LemmaConfig, mode="reduced", g=None, workers=1, normalization="proof") -> RatioReport:
    """Tail-contrast estimator built from the ``s`` smallest and ``s`` largest projections.

    ``z_hat = c (sum of the s lowest z_i - sum of the s highest z_i)`` and
    ``V = z_hat z_hat^T g``.  ``normalization="proof"`` uses ``c = 1/sqrt(s)``,
    which gives ``V = (m^2 g + m N) / s`` with ``m`` the projection contrast;
    ``"mean"`` uses ``c = 1/s``.
    """
    s = cfg.tail_size
    if not 1 <= s <= cfg.k // 2:
        raise ConfigError(f"tail size s={s} must lie in [1, floor(k/2)={cfg.k // 2}]")
    log_k = math.log(cfg.k)
    pred = (2.0 * math.sqrt(s * log_k) / math.sqrt(cfg.d - 1), 8.0 * s * log_k)
    return _ratio_report("lemma4", cfg, mode, g, workers, s=s, normalization=normalization, pred=pred,
                         extra={"normalization": normalization})


# ---------------------------------------------------------------------------
# order statistics


def exact_min_order_stat(k: int) -> tuple[float, float]:
    """``(E[Y_1], E[Y_1^2])`` for the minimum of ``k`` standard normals, by quadrature."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")

    def density(y):
        return k * special.ndtr(-y) ** (k - 1) * math.exp(-0.5 * y * y) / math.sqrt(2.0 * math.pi)

    opts = dict(epsabs=1e-10, epsrel=1e-12, limit=200, points=[0.0])
    first, _ = integrate.quad(lambda y: y * density(y), -12.0, 12.0, **opts)
    second, _ = integrate.quad(lambda y: y * y * density(y), -12.0, 12.0, **opts)
    return first, second


# ---------------------------------------------------------------------------
# concentration


def _lemma1_block(task):
    (d, k, seed, max_iter, tol), b, n = task
    z = _normals(seed, b, _Z_STREAM, (n, k, d))
    x0 = _normals(seed, b, _X0_STREAM, (n, d))
    if k < d:
        def apply(x):
            return np.einsum("nkd,nk->nd", z, np.einsum("nkd,nd->nk", z, x)) / k - x
    else:
        s_minus_i = np.einsum("nkd,nke->nde", z, z) / k - np.eye(d)

        def apply(x):
            return np.einsum("nde,ne->nd", s_minus_i, x)
    return {"norm": _power_norm(apply, x0, max_iter, tol)}


def lemma1_concentration(cfg: LemmaConfig, workers=1, max_iter=200, tol=1e-8) -> ConcentrationReport:
    """Distribution of ``||S_k - I||`` with ``S_k = (1/k) sum z_i z_i^T``."""
    if cfg.d > MAX_LEMMA1_DIM:
        raise ConfigError(f"lemma 1 is limited to d <= {MAX_LEMMA1_DIM}, got {cfg.d}")
    out = _run_blocks(_lemma1_block, (cfg.d, cfg.k, cfg.seed, max_iter, tol), cfg.trials, LEMMA1_BLOCK, workers)
    norms = out["norm"]
    return ConcentrationReport(
        d=cfg.d, k=cfg.k, trials=cfg.trials,
        spectral_norm_median=float(np.median(norms)),
        spectral_norm_q95=float(np.quantile(norms, 0.95)),
        spectral_norm_mean=float(norms.mean()),
    )


# ---------------------------------------------------------------------------
# table


def ci_separated(hi_report_ci, lo_report_ci) -> bool:
    """True when the first interval lies strictly above the second."""
    return hi_report_ci[0] > lo_report_ci[1]


def ratio_table(d, k, s, trials, seed=0, workers=1) -> dict:
    """ratio1/ratio2 of the three estimators at one ``(d, k, s)``."""
    base = lemma2_ratios(LemmaConfig(d, k, trials, seed), workers=workers)
    greedy = lemma3_ratios(LemmaConfig(d, k, trials, seed), workers=workers)
    guided = lemma4_ratios(LemmaConfig(d, k, trials, seed, s=s), workers=workers)
    rows = {}
    for name, rep in (("zo", base), ("zo_greedy", greedy), ("zo_gv", guided)):
        rows[name] = {
            "ratio1_mean": rep.ratio1_mean, "ratio1_ci95": rep.ratio1_ci95,
            "ratio2_mean": rep.ratio2_mean, "ratio2_ci95": rep.ratio2_ci95,
            "predicted_ratio1": rep.predicted_ratio1, "predicted_ratio2": rep.predicted_ratio2,
        }
    ordered = ci_separated(guided.ratio2_ci95, greedy.ratio2_ci95) and ci_separated(greedy.ratio2_ci95, base.ratio2_ci95)
    return {"d": d, "k": k, "s": s, "trials": trials, "estimators": rows, "ordering_holds": ordered}
