"""``zoguide`` command line: verify-lemmas, train, compare and sweep-probes.

Exit codes: 0 success, 1 a tolerance check failed (or a run diverged),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from zoguide import harness
from zoguide.config import OUTPUT_ROOT_ENV, load_config
from zoguide.errors import ConfigError, ZOError
from zoguide.optimizers import run_training
from zoguide.trace import emit_json

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2

log = logging.getLogger("zoguide")


def _positive_int(text):
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _seed(text):
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer seed, got {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 unsigned bits")
    return value


def _int_list(text):
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError(f"expected a non-empty list of positive integers, got {text!r}")
    return values


def _unit_interval(text):
    value = float(text)
    if not 0 < value <= 0.5:
        raise argparse.ArgumentTypeError(f"sigma must lie in (0, 0.5], got {value}")
    return value


def _resolve_out(path) -> Path:
    path = Path(path)
    root = os.environ.get(OUTPUT_ROOT_ENV)
    if root and not path.is_absolute():
        path = Path(root) / path
    path.mkdir(parents=True, exist_ok=True)
    return path


def _echo(config: dict, out_dir: Path) -> None:
    emit_json(config, out_dir / "config.json")
    print(f"resolved config written to {out_dir / 'config.json'}")


def _run_config_echo(run_cfg, out_dir, **extra):
    echoed = run_cfg.to_dict()
    echoed["output"]["directory"] = str(out_dir)
    if extra:
        echoed["command"] = extra
    _echo(echoed, out_dir)


# ---------------------------------------------------------------------------
# commands


def cmd_verify_lemmas(args) -> int:
    out_dir = _resolve_out(args.out)
    _echo({
        "command": "verify-lemmas", "d": args.d, "k_list": sorted(set(args.k_list)), "sigma": args.sigma,
        "trials": args.trials, "lemma1_trials": args.lemma1_trials, "seed": args.seed,
    }, out_dir)
    reports, table, checks = harness.verify_lemmas(
        args.d, args.k_list, args.sigma, args.trials, args.seed, args.lemma1_trials, args.workers,
    )
    for name, items in reports.items():
        emit_json(items, out_dir / f"{name}.json")
    emit_json({
        "d": args.d, "sigma": args.sigma, "trials": args.trials, "rows": table,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
    }, out_dir / "ratio_table.json")

    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name}: {c.detail}")
    failed = [c for c in checks if not c.passed]
    print(f"{len(checks) - len(failed)}/{len(checks)} checks passed; reports in {out_dir}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_train(args) -> int:
    run_cfg = load_config(args.config)
    if args.no_timing:
        run_cfg.output.timing = False
    out_dir = _resolve_out(args.out) if args.out else _resolve_out(run_cfg.output.directory)
    _run_config_echo(run_cfg, out_dir)
    problem = run_cfg.build_problem()
    trace_path = out_dir / "trace.csv" if "csv" in run_cfg.output.formats else None
    run = run_training(problem, run_cfg.optimizer, trace_path=trace_path, timing=run_cfg.output.timing)
    if "json" in run_cfg.output.formats:
        emit_json(run.summary, out_dir / "summary.json")
    s = run.summary
    print(f"variant={run_cfg.optimizer.variant} steps={s.steps} forward_passes={s.forward_passes}")
    print(f"train loss {s.initial_train_loss:.6g} -> {s.final_train_loss:.6g}; eval loss {s.final_eval_loss:.6g}")
    return EXIT_OK


def cmd_compare(args) -> int:
    run_cfg = load_config(args.config)
    timing = run_cfg.output.timing and not args.no_timing
    out_dir = _resolve_out(args.out) if args.out else _resolve_out(run_cfg.output.directory)
    _run_config_echo(run_cfg, out_dir, name="compare", budget=args.budget, seeds=args.seeds,
                     equal_steps=args.equal_steps)
    result = harness.compare(run_cfg, args.budget, args.seeds, args.equal_steps, out_dir, timing, args.workers)
    emit_json(result, out_dir / "comparison.json")

    print(f"{'variant':<12} {'steps':>7} {'median train':>14} {'median eval':>14} {'wins/losses vs mezo':>20}")
    for variant, block in result["variants"].items():
        wl = result.get("wins_vs_mezo", {}).get(variant)
        record = f"{wl['wins']}/{wl['losses']}" if wl else "-"
        print(f"{variant:<12} {block['steps']:>7} {block['median_final_train_loss']:>14.6g} "
              f"{block['median_final_eval_loss']:>14.6g} {record:>20}")
    return EXIT_OK


def cmd_sweep_probes(args) -> int:
    run_cfg = load_config(args.config)
    timing = run_cfg.output.timing and not args.no_timing
    out_dir = _resolve_out(args.out) if args.out else _resolve_out(run_cfg.output.directory)
    _run_config_echo(run_cfg, out_dir, name="sweep-probes", budget=args.budget, seeds=args.seeds,
                     m_list=args.m_list)
    for m in args.m_list:
        # fail fast on an invalid elite split before any run starts
        run_cfg.optimizer.replace(variant="mezo_gv", probe_count=m)
    result = harness.sweep_probes(run_cfg, args.m_list, args.budget, args.seeds, out_dir, timing, args.workers)
    emit_json(result, out_dir / "sweep.json")
    harness.write_sweep_csv(result["rows"], out_dir / "sweep.csv")

    print(f"{'M':>4} {'steps':>7} {'gv train':>12} {'gv eval':>12} {'greedy train':>13} {'greedy eval':>12}")
    for m, steps, gv_tr, gv_ev, gr_tr, gr_ev in harness.sweep_table(result["rows"]):
        print(f"{m:>4} {steps:>7} {gv_tr:>12.6g} {gv_ev:>12.6g} {gr_tr:>13.6g} {gr_ev:>12.6g}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zoguide", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-lemmas", help="Monte Carlo checks of the alignment lemmas")
    p.add_argument("--d", type=_positive_int, default=512)
    p.add_argument("--k-list", type=_int_list, default=[2, 4, 8, 16])
    p.add_argument("--sigma", type=_unit_interval, default=0.5, help="tail fraction s/k for the guided estimator")
    p.add_argument("--trials", type=_positive_int, default=100_000)
    p.add_argument("--lemma1-trials", type=_positive_int, default=500)
    p.add_argument("--seed", type=_seed, default=0)
    p.add_argument("--out", default="lemmas")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.set_defaults(func=cmd_verify_lemmas)

    p = sub.add_parser("train", help="one training run from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (defaults to output.directory)")
    p.add_argument("--no-timing", action="store_true", help="write wall_ms as 0")
    p.set_defaults(func=cmd_train)

    for name, func, helptext in (
        ("compare", cmd_compare, "all variants at equal forward-pass budget"),
        ("sweep-probes", cmd_sweep_probes, "guided and greedy runs over probe counts"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--budget", type=_positive_int, default=20_000, help="forward passes per run")
        p.add_argument("--seeds", type=_positive_int, default=1 if name == "sweep-probes" else 20)
        p.add_argument("--out")
        p.add_argument("--no-timing", action="store_true")
        p.add_argument("--workers", type=_positive_int, default=1)
        if name == "compare":
            p.add_argument("--equal-steps", action="store_true", help="run optimizer.steps steps for every variant")
        else:
            p.add_argument("--m-list", type=_int_list, default=[4, 8, 12])
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"zoguide: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ArithmeticError, ZOError, OSError) as exc:
        print(f"zoguide: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
