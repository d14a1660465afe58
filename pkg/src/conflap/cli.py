"""Command line: ``conflap <experiment> [--config path] [--out dir] [flags...]``.

Parameters come from an optional JSON config and are overridden by flags.
Each run writes ``<experiment>.csv`` and ``<experiment>_summary.json`` into the
output directory (``kappa`` also writes ``kappa.json``).  Files are written
atomically.  Exit codes: 0 pass, 1 failed check or solver breach, 2 usage error.
BLAS runs single-threaded unless ``CONFLAP_THREADS`` says otherwise, because
the thread count changes floating-point summation order and hence the last
digits of the CSV.  That variable is the only environment override.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from pathlib import Path

from threadpoolctl import threadpool_limits

from .errors import ConflapError
from .experiments import EXPERIMENTS, PARAMS, ExperimentResult, ParameterError, fmt, run

THREADS_ENV = "CONFLAP_THREADS"

# flag spellings that differ from the field name
_ALIASES = {
    ("kato", "dims"): ["--n", "--dims"],
    ("kappa", "spin"): ["--non-spin"],
    ("kappa", "simply_connected"): ["--not-simply-connected"],
}


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


def _scalar(typ):
    return {int: int, float: float, str: str}[typ]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="conflap", description="Run a named experiment and write CSV/JSON artifacts.")
    sub = parser.add_subparsers(dest="experiment", required=True, parser_class=_Parser)
    for name, fields in PARAMS.items():
        sp = sub.add_parser(name, help=EXPERIMENTS[name].__doc__)
        sp.add_argument("--config", type=Path, help="JSON file of parameters")
        sp.add_argument("--out", type=Path, default=Path("results"), help="output directory")
        for key, (typ, default) in fields.items():
            flags = _ALIASES.get((name, key), ["--" + key.replace("_", "-")])
            if typ is bool:
                # the aliases switch a default-true property off
                sp.add_argument(*flags, dest=key, action="store_false", default=None)
            elif typ is list:
                elem = float if key in ("radii", "deltas") else int
                sp.add_argument(*flags, dest=key, nargs="+", type=elem, default=None)
            else:
                sp.add_argument(*flags, dest=key, type=_scalar(typ), default=None)
    return parser


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix="." + path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False, allow_nan=True) + "\n"


def collect_params(args: argparse.Namespace) -> dict:
    params: dict = {}
    if args.config is not None:
        try:
            loaded = json.loads(args.config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ParameterError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ParameterError("config must be a JSON object")
        params.update(loaded)
    for key in PARAMS[args.experiment]:
        val = getattr(args, key, None)
        if val is not None:
            params[key] = val
    return params


def write_artifacts(result: ExperimentResult, params: dict, out: Path) -> dict:
    summary = result.summary()
    summary["parameters"] = params
    summary["payload"] = result.payload
    _write_atomic(out / f"{result.name}.csv", result.to_csv())
    _write_atomic(out / f"{result.name}_summary.json", _dump(summary))
    if result.name == "kappa":
        _write_atomic(out / "kappa.json", _dump(result.payload["report"]))
    return summary


def _report(result: ExperimentResult, stream) -> None:
    print(result.to_csv(), end="", file=stream)
    for c in result.checks:
        mark = "PASS" if c.passed else "FAIL"
        print(f"{mark} {c.name}: {fmt(c.value)} {c.relation} {fmt(c.limit)}", file=stream)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(json.dumps({"error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    name = args.experiment
    try:
        params = collect_params(args)
        threads = os.environ.get(THREADS_ENV)
        limit = 1
        if threads is not None:
            try:
                limit = int(threads)
            except ValueError:
                raise ParameterError(f"{THREADS_ENV} must be an integer") from None
            if limit < 1:
                raise ParameterError(f"{THREADS_ENV} must be >= 1")
        with threadpool_limits(limits=limit):
            result = run(name, params)
    except ParameterError as exc:
        print(json.dumps({"experiment": name, "error": "usage", "message": str(exc)}), file=sys.stderr)
        return 2
    except ConflapError as exc:
        record = {
            "experiment": name,
            "passed": False,
            "error": type(exc).__name__,
            "message": str(exc),
            "parameters": params,
        }
        for stale in (f"{name}.csv", "kappa.json" if name == "kappa" else None):
            if stale and (args.out / stale).exists():
                (args.out / stale).unlink()
        _write_atomic(args.out / f"{name}_summary.json", _dump(record))
        print(json.dumps(record), file=sys.stderr)
        return 1
    summary = write_artifacts(result, params, args.out)
    _report(result, sys.stdout)
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
