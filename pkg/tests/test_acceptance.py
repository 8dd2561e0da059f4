"""Acceptance gate A1-A9.

Each criterion runs at its stated size and tolerance, prints one
``A<n> PASS|FAIL`` line, and asserts.  Run on its own with::

    pytest tests/test_acceptance.py -s

A consolidated summary is printed when the module finishes.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest

from zoguide import harness
from zoguide.cli import main as cli_main
from zoguide.config import load_config
from zoguide.estimators import (
    LossOracle,
    compute_greedy_perturbation,
    compute_guiding_vector,
    greedy_estimate,
    gv_estimate,
    spsa_estimate,
    spsa_estimate_multi,
)
from zoguide.optimizers import OptimizerConfig, run_training, steps_for_budget
from zoguide.prng import derive_seed, gaussian_stream, perturb_in_place
from zoguide.problems import finite_difference_gradient, logreg_synthetic, lora_linear_problem
from zoguide.theory import (
    LemmaConfig,
    ci_separated,
    exact_min_order_stat,
    lemma1_concentration,
    lemma2_ratios,
    lemma3_ratios,
    lemma4_ratios,
    mean_ci95,
)
from zoguide.trace import read_csv

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
RESULTS = {}


def report(tag, passed, detail):
    RESULTS[tag] = (passed, detail)
    print(f"\n{tag} {'PASS' if passed else 'FAIL'}  {detail}", flush=True)
    return passed


@pytest.fixture(scope="module", autouse=True)
def summary():
    yield
    print("\n\nacceptance summary")
    for tag in sorted(RESULTS):
        passed, detail = RESULTS[tag]
        print(f"  {tag} {'PASS' if passed else 'FAIL'}  {detail}")


def _timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


# A1: averaged estimator ratios


def test_a1_averaged_ratios():
    d, ks = 512, (2, 4, 8, 16, 32)

    def run():
        return [lemma2_ratios(LemmaConfig(d, k, 20_000, seed=1)) for k in ks]

    reps, secs = _timed(run)
    rel = [r.ratio1_mean / math.sqrt(r.k / (d - 1)) - 1 for r in reps]
    par = [r.parallel_mean for r in reps]
    ok = all(abs(x) <= 0.15 for x in rel) and all(abs(p - 1) <= 0.02 for p in par) and secs < 60
    detail = (f"ratio1 rel err {[f'{x:+.3f}' for x in rel]}, mean V.g {[f'{p:.4f}' for p in par]}, "
              f"{secs:.1f} s (< 60)")
    assert report("A1", ok, detail)


# A2: greedy ratios against the quadrature oracle


def test_a2_greedy_ratios():
    d, ks = 512, (2, 4, 8, 16)

    def run():
        return [lemma3_ratios(LemmaConfig(d, k, 100_000, seed=2)) for k in ks]

    reps, secs = _timed(run)
    exact = [exact_min_order_stat(k)[1] for k in ks]
    rel = [r.ratio2_mean / e - 1 for r, e in zip(reps, exact)]
    means = [r.ratio2_mean for r in reps]
    factor = {k: 2 * math.log(k) / e for k, e in zip(ks, exact) if k >= 8}
    ok = (all(abs(x) <= 0.02 for x in rel) and all(np.diff(means) > 0)
          and all(0.5 <= f <= 2 for f in factor.values()) and secs < 60)
    detail = (f"rel err vs E[Y1^2] {[f'{x:+.4f}' for x in rel]}, increasing {bool(all(np.diff(means) > 0))}, "
              f"2 ln k / oracle {{{', '.join(f'{k}: {f:.2f}' for k, f in factor.items())}}}, {secs:.1f} s (< 60)")
    assert report("A2", ok, detail)


# A3: estimator ordering of the gradient-aligned component


def test_a3_ordering():
    def run():
        cfg = dict(d=512, k=16, trials=100_000, seed=3)
        return (lemma4_ratios(LemmaConfig(**cfg, s=8)), lemma3_ratios(LemmaConfig(**cfg)),
                lemma2_ratios(LemmaConfig(**cfg)))

    (gv, greedy, base), secs = _timed(run)
    ok = ci_separated(gv.ratio2_ci95, greedy.ratio2_ci95) and ci_separated(greedy.ratio2_ci95, base.ratio2_ci95)
    ok = ok and secs < 120
    fmt = lambda r: f"{r.ratio2_mean:.3f} [{r.ratio2_ci95[0]:.3f}, {r.ratio2_ci95[1]:.3f}]"  # noqa: E731
    detail = f"gv {fmt(gv)} > greedy {fmt(greedy)} > zo {fmt(base)}, {secs:.1f} s (< 120)"
    assert report("A3", ok, detail)


# A4: concentration of the sample second-moment matrix


def test_a4_concentration_trend():
    ks = (1, 4, 16, 64, 256)

    def run():
        trend = [lemma1_concentration(LemmaConfig(64, k, 500, seed=4)) for k in ks]
        rank_one = lemma1_concentration(LemmaConfig(256, 1, 500, seed=4))
        return trend, rank_one

    (trend, rank_one), secs = _timed(run)
    medians = [r.spectral_norm_median for r in trend]
    rel = rank_one.spectral_norm_median / 255 - 1
    ok = all(np.diff(medians) < 0) and abs(rel) <= 0.1 and secs < 120
    detail = (f"medians {[f'{m:.3f}' for m in medians]} at d=64, k=1 d=256 median "
              f"{rank_one.spectral_norm_median:.1f} vs d-1=255 ({rel:+.3f}), {secs:.1f} s (< 120)")
    assert report("A4", ok, detail)


# A5: equal-budget convergence


def _budget_comparison(config_name, budget, n_seeds):
    run_cfg = load_config(CONFIGS / config_name)
    return harness.compare(run_cfg, budget, n_seeds, timing=False)


def test_a5_equal_budget_convergence():
    start = time.perf_counter()
    parts, ok = [], True
    for name in ("quadratic.json", "logreg.json"):
        result = _budget_comparison(name, 20_000, 20)
        med = {v: b["median_final_train_loss"] for v, b in result["variants"].items()}
        wins = {v: w["wins"] for v, w in result["wins_vs_mezo"].items()}
        for v in ("mezo_gv", "mezo_greedy"):
            ok = ok and med[v] <= med["mezo"] and wins[v] >= 14
        parts.append(f"{name[:-5]}: median mezo {med['mezo']:.4g}, gv {med['mezo_gv']:.4g} "
                     f"({wins['mezo_gv']}/20 wins), greedy {med['mezo_greedy']:.4g} ({wins['mezo_greedy']}/20 wins)")
    secs = time.perf_counter() - start
    ok = ok and secs < 600
    assert report("A5", ok, "; ".join(parts) + f"; {secs:.0f} s (< 600)")


# A6: directional alignment


def test_a6_alignment():
    start = time.perf_counter()
    run_cfg = load_config(CONFIGS / "logreg.json")
    problem = run_cfg.build_problem()
    per_variant = {}
    for variant in ("mezo", "mezo_gv"):
        means = []
        for seed in range(10):
            cfg = run_cfg.optimizer.replace(variant=variant, steps=1000, eval_every=1, master_seed=seed)
            run = run_training(problem, cfg, timing=False)
            means.append(run.summary.mean_cos_sim)
        per_variant[variant] = mean_ci95(means)
    secs = time.perf_counter() - start
    (gv, gv_ci), (mz, mz_ci) = per_variant["mezo_gv"], per_variant["mezo"]
    ok = ci_separated(gv_ci, mz_ci) and secs < 300
    detail = (f"mean cos gv {gv:.4f} [{gv_ci[0]:.4f}, {gv_ci[1]:.4f}] vs mezo {mz:.4f} "
              f"[{mz_ci[0]:.4f}, {mz_ci[1]:.4f}], {secs:.1f} s (< 300)")
    assert report("A6", ok, detail)


# A7: estimator identities


def _quadratic_exactness(trials=200):
    rng = np.random.default_rng(7)
    worst = 0.0
    for t in range(trials):
        d = int(rng.integers(2, 30))
        m = rng.standard_normal((d, d))
        a, b, x = m + m.T, rng.standard_normal(d), rng.standard_normal(d)
        eps = float(10 ** rng.uniform(-3, 0))

        def f(theta, batch=None):
            return 0.5 * theta @ a @ theta + b @ theta

        seed = derive_seed(7, t + 1)
        est = spsa_estimate(LossOracle(f), x.copy(), eps, seed, None)
        expected = gaussian_stream(seed, d) @ (a @ x + b)
        worst = max(worst, abs(est.coefficient - expected) / abs(expected))
    return worst


def _unbiasedness():
    d = 50
    eig = np.logspace(0, 1, d)
    x = gaussian_stream(derive_seed(5, 2), d)
    oracle = LossOracle(lambda th, b=None: 0.5 * float(np.dot(eig * th, th)))
    total = np.zeros(d)
    for i in range(1, 10_001):
        seed = derive_seed(77, i)
        total += spsa_estimate(oracle, x, 1e-3, seed, None).coefficient * gaussian_stream(seed, d)
    return np.linalg.norm(total / 10_000 - eig * x) / np.linalg.norm(eig * x)


def _restore_trials(n=1000):
    rng = np.random.default_rng(70)
    round_trip = dance = 0
    for _ in range(n):
        d = int(rng.choice([1, 7, 1024]))
        theta = rng.standard_normal(d)
        eps = float(10 ** rng.uniform(-6, 0))
        seed = int(rng.integers(0, 2**63))
        work = theta.copy()
        perturb_in_place(work, eps, seed)
        perturb_in_place(work, -eps, seed)
        round_trip += np.array_equal(work, theta)
        work = theta.copy()
        perturb_in_place(work, eps, seed)
        perturb_in_place(work, -2 * eps, seed)
        perturb_in_place(work, eps, seed)
        dance += np.array_equal(work, theta)
    return round_trip, dance


def _forward_pass_accounting():
    f = lambda th, b=None: 0.5 * float(th @ th)  # noqa: E731
    theta = np.ones(6)
    checks = []
    o = LossOracle(f)
    spsa_estimate(o, theta, 1e-3, 1, None)
    checks.append(o.forward_passes == 2)
    for q in (1, 3, 8):
        o = LossOracle(f)
        spsa_estimate_multi(o, theta, 1e-3, 1, None, q)
        checks.append(o.forward_passes == 2 * q)
    for m in (2, 4, 9):
        o = LossOracle(f)
        gv_estimate(o, theta, 1e-3, compute_guiding_vector(o, theta, m, 0.5, 1e-3, 1, None), None)
        checks.append(o.forward_passes == m + 2)
        o = LossOracle(f)
        greedy_estimate(o, theta, 1e-3, compute_greedy_perturbation(o, theta, m, 1e-3, 1, None)[0], None)
        checks.append(o.forward_passes == m + 2)
    problem = load_config(CONFIGS / "quadratic_small.json").build_problem()
    for variant, per_step in (("mezo", 2), ("mezo_gv", 6), ("mezo_greedy", 6)):
        run = run_training(problem, OptimizerConfig(variant=variant, steps=25), timing=False)
        checks.append([r.forward_passes for r in run.rows] == [per_step * t for t in range(1, 26)])
    run = run_training(problem, OptimizerConfig(query_budget=3, steps=10), timing=False)
    checks.append(run.summary.forward_passes == 60)
    return all(checks)


def test_a7_estimator_identities():
    worst = _quadratic_exactness()
    bias = _unbiasedness()
    round_trip, dance = _restore_trials()
    accounting = _forward_pass_accounting()
    parts = {
        "quadratic exactness": worst < 1e-10,
        "unbiasedness": bias < 0.1,
        "restore bit-exact": round_trip == 1000 and dance == 1000,
        "forward-pass accounting": accounting,
    }
    detail = (f"max rel err {worst:.2e} (< 1e-10); rel L2 bias {bias:.4f} (< 0.1); bit-exact restores "
              f"{round_trip}/1000 round trip, {dance}/1000 dance; accounting exact {accounting}; "
              f"failed: {[k for k, v in parts.items() if not v] or 'none'}")
    assert report("A7", all(parts.values()), detail)


# A8: determinism


def _science(path):
    return [(r.step, r.forward_passes, r.train_loss, r.eval_loss, r.cos_sim) for r in read_csv(path)]


def test_a8_determinism(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "problem": {"kind": "logreg", "d": 20, "n_examples": 300},
        "optimizer": {"variant": "mezo_gv", "steps": 200, "eval_every": 10},
        "output": {"directory": str(tmp_path / "unused")},
        "seed": 11,
    }))
    checks = {}
    for run in ("a", "b"):
        out = tmp_path / run
        assert cli_main(["train", "--config", str(cfg), "--out", str(out / "train")]) == 0
        assert cli_main(["compare", "--config", str(cfg), "--budget", "600", "--seeds", "2",
                         "--out", str(out / "compare")]) == 0
        assert cli_main(["sweep-probes", "--config", str(cfg), "--m-list", "2,4", "--budget", "600",
                         "--out", str(out / "sweep")]) == 0
        cli_main(["verify-lemmas", "--d", "16", "--k-list", "2,4", "--trials", "2000", "--lemma1-trials", "20",
                  "--seed", "5", "--out", str(out / "lemmas")])
    a, b = tmp_path / "a", tmp_path / "b"
    checks["train trace"] = _science(a / "train" / "trace.csv") == _science(b / "train" / "trace.csv")
    checks["compare traces"] = all(
        _science(p) == _science(b / "compare" / "traces" / p.name) for p in (a / "compare" / "traces").glob("*.csv"))
    checks["comparison json"] = (a / "compare" / "comparison.json").read_bytes() == \
        (b / "compare" / "comparison.json").read_bytes()
    checks["sweep"] = (a / "sweep" / "sweep.csv").read_bytes() == (b / "sweep" / "sweep.csv").read_bytes()
    checks["lemma reports"] = all(
        p.read_bytes() == (b / "lemmas" / p.name).read_bytes() for p in (a / "lemmas").glob("*.json"))

    cfg4 = LemmaConfig(64, 8, 5000, seed=9)
    checks["workers lemma1"] = lemma1_concentration(LemmaConfig(32, 4, 100, seed=9)) == \
        lemma1_concentration(LemmaConfig(32, 4, 100, seed=9), workers=3)
    checks["workers lemma2"] = lemma2_ratios(cfg4) == lemma2_ratios(cfg4, workers=3)
    checks["workers lemma3"] = lemma3_ratios(cfg4) == lemma3_ratios(cfg4, workers=2)
    checks["workers lemma4"] = lemma4_ratios(LemmaConfig(64, 8, 5000, seed=9, s=4)) == \
        lemma4_ratios(LemmaConfig(64, 8, 5000, seed=9, s=4), workers=2)
    failed = [k for k, v in checks.items() if not v]
    assert report("A8", not failed, f"{len(checks) - len(failed)}/{len(checks)} identical; failed: {failed or 'none'}")


# A9: low-rank reparameterization end to end


def test_a9_lora():
    rng = np.random.default_rng(9)
    worst = 0.0
    for shape in ((16, 16, 2), (8, 12, 3), (5, 5, 5)):
        p = lora_linear_problem(*shape, n_examples=120, seed=1)
        for _ in range(5):
            theta = rng.standard_normal(p.dim)
            fd = finite_difference_gradient(lambda x: p.loss(x), theta, 1e-6)
            worst = max(worst, np.linalg.norm(p.true_gradient(theta) - fd) / np.linalg.norm(fd))

    run_cfg = load_config(CONFIGS / "lora.json")
    result = harness.compare(run_cfg, 20_000, 10, timing=False, variants=("mezo", "mezo_gv"))
    med = {v: b["median_final_train_loss"] for v, b in result["variants"].items()}
    gv_steps = steps_for_budget(run_cfg.optimizer.replace(variant="mezo_gv"), 20_000)
    ok = worst < 1e-5 and med["mezo_gv"] <= med["mezo"]
    detail = (f"gradient vs finite differences max rel {worst:.2e} (< 1e-5); median final MSE gv {med['mezo_gv']:.4g} "
              f"({gv_steps} steps) vs mezo {med['mezo']:.4g} ({20_000 // 2} steps) over 10 seeds")
    assert report("A9", ok, detail)


def test_logreg_problem_is_the_calibrated_one():
    # guard: the acceptance configs describe the problems named by the criteria
    q, lg = load_config(CONFIGS / "quadratic.json"), load_config(CONFIGS / "logreg.json")
    assert q.problem["d"] == 1000 and q.problem["condition_number"] == 10.0
    assert lg.problem["d"] == 200
    assert q.optimizer.probe_count == lg.optimizer.probe_count == 4
    assert q.optimizer.split_ratio == lg.optimizer.split_ratio == 0.5
    assert logreg_synthetic(200).dim == 200
