"""Run every shipped experiment config through the CLI and tabulate exit codes.

Usage: python scripts/run_all.py [--out runs] [--only simulate kappa ...]
"""
import argparse
import time
from pathlib import Path

import yaml

from pullback_lab.cli import main as cli_main

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs", help="root directory for artifacts")
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run")
    args = ap.parse_args()
    rows = []
    for path in sorted(CONFIGS.glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        command = yaml.safe_load(path.read_text())["command"]
        start = time.perf_counter()
        code = cli_main([command, "--config", str(path), "--out", str(Path(args.out) / path.stem)])
        rows.append((path.stem, command, code, time.perf_counter() - start))
    print(f"\n{'config':22s} {'command':10s} exit  seconds")
    for stem, command, code, secs in rows:
        print(f"{stem:22s} {command:10s} {code:4d}  {secs:7.1f}")


if __name__ == "__main__":
    main()
