"""Command line entry point: ``lenglart run | list-presets | report-schema``.

Exit codes: 0 when every check passes, 1 when a check fails, 2 for a bad
configuration.  Reports go to ``--out``, else ``$LENGLART_OUT``, else
``./lenglart-reports``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import subprocess
import sys
import time
import warnings
from datetime import datetime, timezone
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .config import OUT_ENV, RunConfig, load_config
from .errors import BadHorizon, ConfigError, LenglartError
from .presets import PRESETS, Outcome, get_preset, resolve, run_inline, run_preset

SCHEMA_VERSION = "1.0"


def report_schema() -> dict:
    text = resources.files("lenglart").joinpath("data/report_schema.json").read_text()
    return json.loads(text)


def git_describe() -> str:
    here = Path(__file__).resolve().parent
    try:
        res = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"], cwd=here,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return res.stdout.strip() if res.returncode == 0 and res.stdout.strip() else "unknown"


def _clean(obj):
    """Make ``obj`` JSON-safe: fractions as strings, non-finite floats as strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_clean(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    return obj


def build_report(cfg: RunConfig, outcome: Outcome, caught: list[str], started: float,
                 elapsed: float) -> dict:
    passed = outcome.passed
    return _clean({
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "git_describe": git_describe(),
        "run": cfg.preset or f"model:{cfg.model}",
        "config": cfg.echo(),
        "passed": passed,
        "exit_code": 0 if passed else 1,
        "checks": [c.to_dict() for c in outcome.checks],
        "reports": [r.to_dict() for r in outcome.reports],
        "expected_failures": [r.to_dict() for r in outcome.expected_failures],
        "settings": outcome.settings,
        "warnings": caught,
        "timestamp": {
            "utc": datetime.fromtimestamp(started, timezone.utc).isoformat(timespec="seconds"),
            "elapsed_seconds": round(elapsed, 3),
        },
    })


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


CSV_FIELDS = ["kind", "name", "measure", "s", "t", "functional", "value", "se", "z",
              "tolerance", "passed"]


def report_csv(report: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for c in report["checks"]:
        w.writerow({"kind": "check", "name": c["name"], "value": c["value"],
                    "tolerance": c["tolerance"], "passed": c["passed"]})
    for kind in ("reports", "expected_failures"):
        for r in report[kind]:
            for cell in r["cells"]:
                w.writerow({"kind": "drift" if kind == "reports" else "drift_expected_fail",
                            "name": r["test_id"], "measure": r["measure"],
                            "s": cell["window"][0], "t": cell["window"][1],
                            "functional": cell["functional"], "value": cell["value"],
                            "se": cell["se"], "z": cell["z"], "tolerance": r["z_max"],
                            "passed": abs(cell["z"]) <= r["z_max"]})
    return buf.getvalue()


def execute(cfg: RunConfig) -> tuple[dict, RunConfig]:
    """Run a validated config and return the report and the resolved config."""
    cfg.validate()
    if cfg.preset is not None:
        cfg = resolve(cfg)
    started = time.time()
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        try:
            outcome = run_preset(cfg) if cfg.preset is not None else run_inline(cfg)
        except BadHorizon as exc:
            raise ConfigError(str(exc)) from None
        except ValueError as exc:
            if isinstance(exc, LenglartError):
                raise
            raise ConfigError(str(exc)) from None
    caught = sorted({f"{w.category.__name__}: {w.message}" for w in rec})
    return build_report(cfg, outcome, caught, started, time.perf_counter() - t0), cfg


def write_reports(report: dict, cfg: RunConfig) -> list[Path]:
    out = cfg.out_dir()
    out.mkdir(parents=True, exist_ok=True)
    stem = (cfg.preset or f"model-{cfg.model}") + (f"-seed{cfg.seed}" if cfg.seed is not None else "")
    written = []
    for fmt in cfg.formats:
        path = out / f"{stem}.{fmt}"
        path.write_text(report_json(report) if fmt == "json" else report_csv(report))
        written.append(path)
    return written


def run(cfg: RunConfig, stream=None) -> int:
    """Run ``cfg``, write the reports and return the exit code."""
    stream = stream or sys.stdout
    try:
        report, cfg = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except LenglartError as exc:
        print(f"check error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for c in report["checks"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}  value={c['value']}  "
              f"tol={c['tolerance']}", file=stream)
    for r in report["reports"]:
        print(f"{'PASS' if r['passed'] else 'FAIL'}  drift[{r['measure']}] {r['test_id']}  "
              f"max|z|={r['max_abs_z']:.3f}  paths={r['n_paths']}", file=stream)
    for r in report["expected_failures"]:
        print(f"INFO  drift[{r['measure']}] {r['test_id']} (expected to fail)  "
              f"max|z|={r['max_abs_z']:.3f}", file=stream)
    for w in report["warnings"]:
        print(f"WARN  {w}", file=stream)
    for path in write_reports(report, cfg):
        print(f"wrote {path}", file=stream)
    verdict = "all checks passed" if report["passed"] else "some checks FAILED"
    print(f"{report['run']}: {verdict}", file=stream)
    return 0 if report["passed"] else 1


def list_presets(as_json: bool = False) -> str:
    if as_json:
        rows = [{"name": p.name, "anchor": p.anchor, "defaults": _clean(p.defaults)}
                for p in PRESETS.values()]
        return json.dumps(rows, indent=2) + "\n"
    width = max(len(n) for n in PRESETS)
    return "".join(f"{p.name:<{width}}  {p.anchor}\n" for p in PRESETS.values())


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="lenglart", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a preset or an inline scenario")
    src = r.add_mutually_exclusive_group()
    src.add_argument("--preset")
    src.add_argument("--model", help="inline scenario: model name")
    r.add_argument("--config", help="flat key = value config file")
    r.add_argument("--target")
    r.add_argument("--measure", choices=["P", "Q"])
    r.add_argument("--paths", type=int)
    r.add_argument("--grid", type=int)
    r.add_argument("--T", type=float, dest="T")
    r.add_argument("--seed", type=int)
    r.add_argument("--p", type=Fraction)
    r.add_argument("--estimator")
    r.add_argument("--batch", type=int)
    r.add_argument("--z-max", type=float, dest="z_max")
    r.add_argument("--checkpoints", type=lambda s: tuple(float(x) for x in s.split(",")))
    r.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./lenglart-reports)")
    r.add_argument("--format", choices=["json", "csv"], action="append", dest="formats")

    lp = sub.add_parser("list-presets", help="list the presets")
    lp.add_argument("--json", action="store_true")
    sub.add_parser("report-schema", help="print the JSON report schema")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-presets":
        sys.stdout.write(list_presets(args.json))
        return 0
    if args.command == "report-schema":
        sys.stdout.write(json.dumps(report_schema(), indent=2) + "\n")
        return 0
    try:
        base = load_config(args.config) if args.config else RunConfig()
        if args.preset and base.model or args.model and base.preset:
            raise ConfigError("set exactly one of preset and model")
        if args.preset:
            get_preset(args.preset)
        overrides = {k: getattr(args, k) for k in
                     ("preset", "model", "target", "measure", "paths", "grid", "T", "seed", "p",
                      "estimator", "batch", "z_max", "checkpoints", "out")}
        if args.formats:
            overrides["formats"] = tuple(dict.fromkeys(args.formats))
        cfg = base.merged(**overrides)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return run(cfg)


if __name__ == "__main__":
    raise SystemExit(main())
