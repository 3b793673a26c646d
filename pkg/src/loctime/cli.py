"""Command line front end.

    loctime run --config FILE [--seed S] [--workers W] [--out DIR] [--KEY VALUE ...]
    loctime report --in DIR [--format csv|json]

Exit status: 0 when every hard check passes, 1 when one fails, 2 on usage
or input errors.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import io
import json
import os
import platform
import re
import sys

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, build_config, load_config, parse_value
from .experiments import ExperimentResult, defaults_for, run_experiment
from .stats import TailAudit

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


def _num(v):
    """Plain JSON-friendly scalars (numpy types, inf and nan as strings)."""
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else str(v)
    if isinstance(v, np.bool_):
        return bool(v)
    if isinstance(v, dict):
        return {k: _num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_num(x) for x in v]
    if isinstance(v, np.ndarray):
        return _num(v.tolist())
    return v


def _write_csv(path: str, header: list, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])


def summarize(res: ExperimentResult) -> dict:
    return _num({
        "experiment": res.experiment,
        "passed": res.passed,
        "checks": [vars(c) for c in res.checks],
        "tests": [t.to_dict() for t in res.tests],
        "audits": [json.loads(a.to_json()) if isinstance(a, TailAudit) else a.to_dict()
                   for a in res.audits],
        "rates": [{k: v for k, v in r.to_dict().items() if k != "errors"} | {"medians": r.medians}
                  for r in res.rates],
        "diagnostics": res.diagnostics,
    })


def write_reports(res: ExperimentResult, cfg: ExperimentConfig, out: str, started: str) -> None:
    os.makedirs(out, exist_ok=True)
    exp = res.experiment
    for name, values in res.distributions.items():
        _write_csv(os.path.join(out, f"distribution-{_slug(name)}.csv"),
                   ["experiment", "replication", "value"],
                   ((exp, i, v.item() if hasattr(v, "item") else v) for i, v in enumerate(values)))
    for audit in res.audits:
        if isinstance(audit, TailAudit):
            _write_csv(os.path.join(out, f"audit-{_slug(audit.name)}.csv"),
                       ["u", "empirical", "bound", "ci", "violated", "tight"],
                       ((r.u, r.empirical, r.bound, r.ci, r.violated, r.tight) for r in audit.rows))
        else:
            _write_csv(os.path.join(out, f"decay-{_slug(audit.name)}.csv"),
                       ["u", "empirical", "bound"],
                       ((u, e, audit.fitted_C * s) for u, e, s in zip(audit.u, audit.empirical, audit.shape)))
    for rate in res.rates:
        _write_csv(os.path.join(out, f"rate-{_slug(rate.experiment)}.csv"),
                   ["n", "error", "exponent", "ci_lo", "ci_hi"],
                   ((n, e, rate.exponent, rate.ci_lo, rate.ci_hi) for n, e in zip(rate.n_grid, rate.medians)))
    _write_csv(os.path.join(out, "checks.csv"), ["check", "passed", "value", "threshold", "hard"],
               ((c.name, c.passed, "" if c.value is None else c.value,
                 "" if c.threshold is None else c.threshold, c.hard) for c in res.checks))
    with open(os.path.join(out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summarize(res), fh, indent=1, sort_keys=True)
    manifest = {
        "config": cfg.snapshot(),
        "version": __version__,
        "started": started,
        "finished": dt.datetime.now(dt.timezone.utc).isoformat(),
        "streams": res.streams,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "passed": res.passed,
    }
    with open(os.path.join(out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(_num(manifest), fh, indent=1, sort_keys=True)


def _split_extra(extra: list) -> dict:
    """``--key value`` / ``--key=value`` pairs into a dict."""
    out = {}
    i = 0
    while i < len(extra):
        tok = extra[i]
        if not tok.startswith("--") or len(tok) < 3:
            raise UsageError(f"unexpected argument {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, val = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"missing value for {tok}")
            val = extra[i + 1]
            i += 2
        out[key if key in defaults_keys() else key.replace("-", "_")] = parse_value(val)
    return out


def defaults_keys() -> set:
    from .experiments import DEFAULTS

    return {k for d in DEFAULTS.values() for k in d}


def cmd_run(args, extra) -> int:
    overrides = _split_extra(extra)
    for key in ("seed", "workers", "out", "experiment"):
        v = getattr(args, key)
        if v is not None:
            overrides[key] = v
    if args.config:
        cfg = load_config(args.config, overrides, defaults_for)
    else:
        cfg = build_config(overrides, defaults_for)
    try:
        os.makedirs(cfg.out, exist_ok=True)
        probe = os.path.join(cfg.out, ".write-test")
        with open(probe, "w") as fh:
            fh.write("")
        os.remove(probe)
    except OSError as exc:
        raise UsageError(f"output directory {cfg.out!r} is not writable: {exc}") from exc
    started = dt.datetime.now(dt.timezone.utc).isoformat()
    try:
        res = run_experiment(cfg.experiment, cfg.params, cfg.seed, cfg.workers)
    except ValueError as exc:
        # parameter combinations the experiment cannot run with
        raise UsageError(f"invalid parameters for {cfg.experiment}: {exc}") from exc
    write_reports(res, cfg, cfg.out, started)
    for c in res.checks:
        tag = "PASS" if c.passed else ("FAIL" if c.hard else "NOTE")
        print(f"{tag}  {res.experiment}: {c.name}"
              + (f"  value={c.value:.6g}" if c.value is not None else "")
              + (f"  threshold={c.threshold:.6g}" if c.threshold is not None else ""))
    print(f"{'PASS' if res.passed else 'FAIL'}  {res.experiment}  -> {cfg.out}")
    return EXIT_PASS if res.passed else EXIT_FAIL


def _load_summaries(root: str) -> list[dict]:
    if not os.path.isdir(root):
        raise UsageError(f"no such directory {root!r}")
    found = []
    for dirpath, _, files in sorted(os.walk(root)):
        if "summary.json" in files:
            path = os.path.join(dirpath, "summary.json")
            try:
                with open(path, encoding="utf-8") as fh:
                    data = json.load(fh)
                if not isinstance(data, dict) or "experiment" not in data or "checks" not in data:
                    raise ValueError("missing fields")
            except ValueError as exc:
                raise UsageError(f"malformed report {path}: {exc}") from exc
            found.append(data)
    if not found:
        raise UsageError(f"no summary.json under {root!r}")
    return found


def merge_summaries(summaries: list[dict]) -> list[dict]:
    rows = []
    for s in summaries:
        checks = s["checks"]
        hard = [c for c in checks if c.get("hard", True)]
        rows.append({
            "experiment": s["experiment"],
            "passed": bool(s.get("passed")),
            "hard_pass": sum(bool(c["passed"]) for c in hard),
            "hard_fail": sum(not c["passed"] for c in hard),
            "diagnostics": len(checks) - len(hard),
            "statistics": {c["name"]: c.get("value") for c in checks},
            "exponents": {r["experiment"]: {"exponent": r["exponent"], "ci_lo": r["ci_lo"], "ci_hi": r["ci_hi"]}
                          for r in s.get("rates", [])},
        })
    return rows


def cmd_report(args) -> int:
    rows = merge_summaries(_load_summaries(args.input))
    if args.format == "json":
        print(json.dumps(rows, indent=1, sort_keys=True))
    else:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["experiment", "kind", "name", "value", "ci_lo", "ci_hi", "passed"])
        for r in rows:
            w.writerow([r["experiment"], "summary", "hard checks", f"{r['hard_pass']}/{r['hard_pass'] + r['hard_fail']}",
                        "", "", r["passed"]])
            for name, v in r["statistics"].items():
                w.writerow([r["experiment"], "check", name, v, "", "", ""])
            for name, e in r["exponents"].items():
                w.writerow([r["experiment"], "exponent", name, e["exponent"], e["ci_lo"], e["ci_hi"], ""])
        sys.stdout.write(out.getvalue())
    return EXIT_PASS


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="loctime", description="Random walk local time laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run one experiment")
    run.add_argument("--config", help="key = value configuration file")
    run.add_argument("--experiment", help="experiment id (overrides the file)")
    run.add_argument("--seed", type=int)
    run.add_argument("--workers", type=int)
    run.add_argument("--out")
    rep = sub.add_parser("report", help="merge report directories")
    rep.add_argument("--in", dest="input", required=True)
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        if args.command == "run":
            return cmd_run(args, extra)
        if extra:
            raise UsageError(f"unexpected arguments {' '.join(extra)}")
        return cmd_report(args)
    except (UsageError, ConfigError) as exc:
        print(f"loctime: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
