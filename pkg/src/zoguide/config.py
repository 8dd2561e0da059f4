"""JSON run configuration: ``problem``, ``optimizer``, ``output`` and ``seed``."""

from __future__ import annotations

import dataclasses
import inspect
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

from zoguide.errors import ConfigError
from zoguide.optimizers import OptimizerConfig
from zoguide.problems import PROBLEMS, make_problem

OUTPUT_ROOT_ENV = "ZOGUIDE_OUTPUT_ROOT"
_TOP_KEYS = {"problem", "optimizer", "output", "seed"}
_OUTPUT_KEYS = {"directory", "formats", "timing"}
_FORMATS = {"csv", "json"}
# the run seed lives at the top level, not inside the optimizer section
_OPTIMIZER_KEYS = {f.name for f in dataclasses.fields(OptimizerConfig)} - {"master_seed"}


@dataclass
class OutputConfig:
    directory: str = "runs"
    formats: list = field(default_factory=lambda: ["csv", "json"])
    timing: bool = True


@dataclass
class RunConfig:
    problem: dict
    optimizer: OptimizerConfig
    output: OutputConfig
    seed: int

    def build_problem(self):
        params = {k: v for k, v in self.problem.items() if k != "kind"}
        return make_problem(self.problem["kind"], **params)

    def output_dir(self) -> Path:
        path = Path(self.output.directory)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not path.is_absolute():
            path = Path(root) / path
        return path

    def to_dict(self) -> dict:
        opt = dataclasses.asdict(self.optimizer)
        opt.pop("master_seed")
        return {
            "problem": dict(self.problem),
            "optimizer": opt,
            "output": dataclasses.asdict(self.output),
            "seed": self.seed,
        }


def _reject_unknown(section: str, given: dict, allowed) -> None:
    unknown = sorted(set(given) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")


def _resolve_problem(raw: dict) -> dict:
    if not isinstance(raw, dict) or "kind" not in raw:
        raise ConfigError("problem section must be an object with a 'kind'")
    kind = raw["kind"]
    if kind not in PROBLEMS:
        raise ConfigError(f"unknown problem kind {kind!r}; expected one of {sorted(PROBLEMS)}")
    sig = inspect.signature(PROBLEMS[kind])
    params = {k: v for k, v in raw.items() if k != "kind"}
    _reject_unknown(f"problem ({kind})", params, sig.parameters)
    resolved = {"kind": kind}
    for name, p in sig.parameters.items():
        if name in params:
            resolved[name] = params[name]
        elif p.default is inspect.Parameter.empty:
            raise ConfigError(f"problem ({kind}) is missing required parameter {name!r}")
        else:
            resolved[name] = p.default
    return resolved


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    _reject_unknown("config", data, _TOP_KEYS)
    for key in ("problem", "optimizer"):
        if key not in data:
            raise ConfigError(f"config is missing the {key!r} section")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")

    opt_raw = data["optimizer"]
    if not isinstance(opt_raw, dict):
        raise ConfigError("optimizer section must be an object")
    _reject_unknown("optimizer", opt_raw, _OPTIMIZER_KEYS)
    optimizer = OptimizerConfig(**opt_raw, master_seed=seed)

    out_raw = data.get("output", {})
    _reject_unknown("output", out_raw, _OUTPUT_KEYS)
    output = OutputConfig(**out_raw)
    bad = set(output.formats) - _FORMATS
    if bad:
        raise ConfigError(f"unknown output format(s): {sorted(bad)}")

    return RunConfig(_resolve_problem(data["problem"]), optimizer, output, seed)


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    return parse_config(data)
