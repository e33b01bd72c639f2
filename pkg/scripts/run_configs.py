"""Run every JSON config in configs/ (or those given) and print a one-line verdict each."""
import argparse
import sys
from pathlib import Path

from conelab.cli import main

ROOT = Path(__file__).resolve().parents[1]


def run(paths, out_root: Path) -> int:
    worst = 0
    for cfg in paths:
        out = out_root / cfg.stem
        code = main(["run", "--config", str(cfg), "--out", str(out)])
        print(f"{cfg.name:28s} exit={code} -> {out}")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    ap = argparse.ArgumentParser()
    ap.add_argument("configs", nargs="*", type=Path)
    ap.add_argument("--out", type=Path, default=ROOT / "runs")
    args = ap.parse_args()
    paths = args.configs or sorted((ROOT / "configs").glob("*.json"))
    sys.exit(run(paths, args.out))
