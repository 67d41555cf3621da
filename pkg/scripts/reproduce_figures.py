#!/usr/bin/env python3
"""Run every experiment config through the CLI, reproducing the full set of
result CSVs under an output directory.

    python scripts/reproduce_figures.py --out out/ [--seed 7] [--trials N]
                                        [--only fig5 fig13 ...]

The heavyweight runs are the BER sweep (fig13, a few minutes at the default
2000 packets per point) and the analysis validation (fig14). Pass --trials to
scale everything down for a quick look.
"""

import argparse
import sys
import time
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT / "src"))

from smchanest.cli import FIGURES, main as cli_main  # noqa: E402


def run(argv):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--trials", type=int, default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--only", nargs="*", default=None,
                        help="subset of figure names (default: all)")
    args = parser.parse_args(argv)

    done = set()
    for fig, (command, config) in FIGURES.items():
        if args.only and fig not in args.only:
            continue
        key = (command, config)
        if key in done:      # figs 14-16 share one validation run
            continue
        done.add(key)
        cli_args = [command, "--out", args.out]
        if config is not None:
            cli_args += ["--config", str(ROOT / config), "--seed", str(args.seed)]
            if args.trials is not None:
                cli_args += ["--trials", str(args.trials)]
        if args.threads is not None:
            cli_args += ["--threads", str(args.threads)]
        t0 = time.time()
        print(f"[{fig}] smchanest {' '.join(cli_args)}", flush=True)
        rc = cli_main(cli_args)
        if rc != 0:
            print(f"[{fig}] FAILED with exit code {rc}", file=sys.stderr)
            return rc
        print(f"[{fig}] done in {time.time() - t0:.1f}s", flush=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(run(sys.argv[1:]))
