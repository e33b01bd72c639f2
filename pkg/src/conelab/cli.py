"""Command line entry point: ``python -m conelab run --config cfg.json [--out dir]``.

Exit codes: 0 all hard criteria pass, 1 some hard criterion failed,
2 usage or configuration error, 3 numerical guard tripped.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .errors import (CalculusError, ConelabError, DivergentIntegralError, IndefiniteOperatorError,
                     InvalidManifoldError, LevelTooSmallError, QuadratureError)
from .reports import write_csv
from .scenarios import ConfigError, ExperimentConfig, run_scenario

log = logging.getLogger("conelab")

EXIT_OK, EXIT_FAILED, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_ERRORS = (DivergentIntegralError, QuadratureError, IndefiniteOperatorError, CalculusError,
                  LevelTooSmallError, np.linalg.LinAlgError)


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    return x


def dump_json(obj, path: Path | None = None) -> str:
    text = json.dumps(_jsonable(obj), sort_keys=True, indent=2) + "\n"
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    return text


def error_record(kind: str, exc: BaseException, code: int) -> dict:
    return {"error": kind, "type": type(exc).__name__, "message": str(exc), "exit_code": code}


def run(cfg: ExperimentConfig, out: Path) -> int:
    """Run one scenario, write ``summary.json`` and ``tables/*.csv``, return the exit code."""
    criteria, tables = run_scenario(cfg)
    summary = {"scenario": cfg.scenario, "seed": cfg.seed, "criteria": criteria}
    dump_json(summary, out / "summary.json")
    for name, rows in sorted(tables.items()):
        if rows:
            write_csv(out / "tables" / f"{name}.csv", rows)
    for c in criteria:
        log.info("%s %s measured=%s threshold=%s%s", "PASS" if c["pass"] else "FAIL", c["name"],
                 c["measured"], c["threshold"], "" if c["hard"] else " (soft)")
    ok = all(c["pass"] for c in criteria if c["hard"])
    return EXIT_OK if ok else EXIT_FAILED


def _fail(out: Path | None, kind: str, exc: BaseException, code: int) -> int:
    rec = error_record(kind, exc, code)
    text = dump_json(rec, (out / "error.json") if out is not None else None)
    sys.stderr.write(text)
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="conelab")
    sub = parser.add_subparsers(dest="command", required=True)
    pr = sub.add_parser("run", help="run one experiment config")
    pr.add_argument("--config", required=True)
    pr.add_argument("--out", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    out = Path(args.out) if args.out else None
    try:
        doc = json.loads(Path(args.config).read_text())
        cfg = ExperimentConfig.from_dict(doc)
    except (OSError, json.JSONDecodeError, ConfigError, TypeError) as exc:
        return _fail(out, "config", exc, EXIT_CONFIG)
    if out is None:
        out = Path(cfg.output or f"runs/{cfg.scenario}")
    try:
        return run(cfg, out)
    except (ConfigError, InvalidManifoldError) as exc:
        return _fail(out, "config", exc, EXIT_CONFIG)
    except NUMERIC_ERRORS as exc:
        return _fail(out, "numerical", exc, EXIT_NUMERIC)
    except ConelabError as exc:
        return _fail(out, "numerical", exc, EXIT_NUMERIC)


if __name__ == "__main__":
    sys.exit(main())
