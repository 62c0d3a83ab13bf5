#!/usr/bin/env python3
"""Run every experiment config in scripts/configs through the CLI.

Each run writes ``<stem>.csv`` and ``<stem>.manifest.json`` into the output
directory.  One config (``supercritical_solve``) demonstrates the flagged
outcome and is expected to exit 2; every other run must exit 0.  The script
exits nonzero if any run deviates from its expected code, so it doubles as a
smoke test of the installed package.
"""

import argparse
import sys
from pathlib import Path

from harmonictails import cli

CONFIG_DIR = Path(__file__).resolve().parent / "configs"

# stems whose runs are *supposed* to be flagged (exit code 2)
EXPECTED_FLAGGED = {"supercritical_solve"}


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--out", type=Path, default=Path("results"),
                        help="output directory (default: ./results)")
    parser.add_argument("--only", nargs="*", metavar="STEM",
                        help="run only the configs with these stems")
    args = parser.parse_args()

    configs = sorted(CONFIG_DIR.glob("*.json"))
    if args.only:
        keep = set(args.only)
        missing = keep - {c.stem for c in configs}
        if missing:
            print(f"no such config(s): {sorted(missing)}", file=sys.stderr)
            return 1
        configs = [c for c in configs if c.stem in keep]
    if not configs:
        print("no configs found", file=sys.stderr)
        return 1

    deviations = []
    for cfg in configs:
        expected = 2 if cfg.stem in EXPECTED_FLAGGED else 0
        code = cli.main(["run", str(cfg), "--out", str(args.out), "--quiet"])
        note = "ok" if code == expected else "UNEXPECTED"
        if code != expected:
            deviations.append(cfg.stem)
        print(f"{cfg.stem:24s} exit={code} expected={expected}  {note}")

    if deviations:
        print(f"\n{len(deviations)} run(s) deviated: {deviations}", file=sys.stderr)
        return 1
    print(f"\nall {len(configs)} runs matched; outputs in {args.out}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
