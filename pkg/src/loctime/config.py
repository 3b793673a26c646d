"""Flat ``key = value`` experiment configuration.

Lines are ``key = value``; ``#`` starts a comment.  Values are parsed as
int, float, bool (true/false) or a comma-separated list of those; anything
else stays a string.  The keys ``experiment``, ``seed``, ``workers`` and
``out`` are reserved; every other key is an experiment parameter and must
be one the experiment knows.  ``LOCTIME_OUT`` overrides the output
directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

OUT_ENV = "LOCTIME_OUT"
RESERVED = ("experiment", "seed", "workers", "out")
# parameters that may be zero; all other numbers must be positive
MAY_BE_ZERO = {"reps", "t_paths", "gw_reps", "fe_reps", "exit_reps", "eta_samples", "tau_runs",
               "probe_reps", "lt_reps", "sup_reps", "rho_reps", "nu_reps", "usum_reps",
               "level_reps", "inc_walk_reps", "inc_wiener_reps", "exit_sum_reps", "exp_sum_reps",
               "coin_steps", "rate_reps", "embed_reps",
               # probe grids may start at the trivial point 0
               "nu_u", "rho_u", "usum_z", "exit_sum_u", "exp_sum_u", "laplace_s", "times",
               "sheet_times"}


class ConfigError(ValueError):
    pass


def _scalar(text: str):
    low = text.lower()
    if low in ("true", "false"):
        return low == "true"
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def parse_value(text: str):
    text = text.strip()
    if "," in text:
        return [_scalar(p.strip()) for p in text.split(",") if p.strip()]
    return _scalar(text)


def parse_text(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, value = (p.strip() for p in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        out[key] = parse_value(value)
    return out


@dataclass
class ExperimentConfig:
    experiment: str
    seed: int = 0
    workers: int = 1
    out: str = "results"
    params: dict = field(default_factory=dict)

    def snapshot(self) -> dict:
        return {"experiment": self.experiment, "seed": self.seed, "workers": self.workers,
                "out": self.out, "params": dict(sorted(self.params.items()))}


def _check_number(key: str, v):
    if isinstance(v, bool):
        return
    if isinstance(v, (int, float)):
        if v < 0 or (v == 0 and key not in MAY_BE_ZERO):
            raise ConfigError(f"parameter {key} must be positive, got {v}")
    elif isinstance(v, list):
        for x in v:
            _check_number(key, x)


def build_config(values: dict, defaults_for) -> ExperimentConfig:
    """Validate ``values`` (file keys merged with flag overrides) against the
    experiment's defaults, returned by ``defaults_for(experiment)``."""
    values = dict(values)
    exp = values.pop("experiment", None)
    if not isinstance(exp, str):
        raise ConfigError("missing experiment id")
    defaults = defaults_for(exp)  # raises ConfigError for unknown ids
    seed = values.pop("seed", 0)
    workers = values.pop("workers", 1)
    out = str(values.pop("out", "results"))
    if not isinstance(seed, int) or isinstance(seed, bool) or not 0 <= seed < 2**64:
        raise ConfigError("seed must be a nonnegative integer below 2^64")
    if not isinstance(workers, int) or isinstance(workers, bool) or workers < 1:
        raise ConfigError("workers must be a positive integer")
    unknown = sorted(set(values) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown parameter(s) for {exp}: {', '.join(unknown)}")
    params = dict(defaults)
    for key, v in values.items():
        want = defaults[key]
        if isinstance(want, list) and not isinstance(v, list):
            v = [v]
        if isinstance(want, float) and isinstance(v, int) and not isinstance(v, bool):
            v = float(v)
        if isinstance(want, int) and not isinstance(want, bool) and isinstance(v, float):
            if not v.is_integer():
                raise ConfigError(f"parameter {key} must be an integer")
            v = int(v)
        if type(want) is not type(v) and not (isinstance(want, list) and isinstance(v, list)):
            raise ConfigError(f"parameter {key} has the wrong type")
        params[key] = v
    for key, v in params.items():
        _check_number(key, v)
    env = os.environ.get(OUT_ENV)
    if env:
        out = env
    return ExperimentConfig(exp, int(seed), int(workers), out, params)


def load_config(path: str, overrides: dict | None, defaults_for) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            values = parse_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    values.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return build_config(values, defaults_for)
