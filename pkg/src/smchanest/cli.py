"""Command-line entry point: parse a scenario config, dispatch an experiment
runner, and write CSV plus metadata into the output directory."""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

from .config import ConfigError, load_config
from .experiments import (
    run_analysis_validation,
    run_ber,
    run_complexity_table,
    run_learning_curve,
    run_mse_vs_snr,
    save_metrics,
)

_RUNNERS = {
    "curve": run_learning_curve,
    "mse-vs-snr": run_mse_vs_snr,
    "ber": run_ber,
    "validate-analysis": run_analysis_validation,
}

# figure -> (subcommand, config); the analysis validation emits one CSV whose
# columns cover the update-probability figure and both excess-MSE figures
FIGURES = {
    "fig4": ("complexity", None),
    "fig5": ("curve", "configs/fig5.cfg"),
    "fig6": ("curve", "configs/fig6.cfg"),
    "fig7": ("curve", "configs/fig7.cfg"),
    "fig8": ("curve", "configs/fig8.cfg"),
    "fig9": ("mse-vs-snr", "configs/fig9.cfg"),
    "fig10": ("mse-vs-snr", "configs/fig10.cfg"),
    "fig11": ("curve", "configs/fig11.cfg"),
    "fig12": ("curve", "configs/fig12.cfg"),
    "fig13": ("ber", "configs/fig13.cfg"),
    "fig14": ("validate-analysis", "configs/fig14.cfg"),
    "fig15": ("validate-analysis", "configs/fig14.cfg"),
    "fig16": ("validate-analysis", "configs/fig14.cfg"),
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="smchanest",
        description="Set-membership channel estimation experiments",
    )
    parser.add_argument("--list-figures", action="store_true",
                        help="print the figure -> subcommand/config mapping and exit")
    sub = parser.add_subparsers(dest="command")

    def add_common(p, needs_config=True):
        if needs_config:
            p.add_argument("--config", required=True, help="scenario config file")
            p.add_argument("--seed", required=True, type=int, help="master seed (u64)")
            p.add_argument("--trials", type=int, default=None,
                           help="override the config trial count")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=None,
                       help="worker threads (default: cores, or SMCHANEST_THREADS)")

    for name in _RUNNERS:
        add_common(sub.add_parser(name, help=f"run the {name} experiment"))
    add_common(sub.add_parser("complexity", help="emit the complexity table"),
               needs_config=False)
    return parser


def _list_figures() -> str:
    lines = ["figure     subcommand          config"]
    for fig, (cmd, cfg) in FIGURES.items():
        lines.append(f"{fig:<10} {cmd:<19} {cfg or '(built-in grid)'}")
    return "\n".join(lines)


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.list_figures:
        print(_list_figures())
        return 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    try:
        if args.command == "complexity":
            metrics = run_complexity_table()
            save_metrics(metrics, args.out, "complexity")
            print(os.path.join(args.out, "complexity.csv"))
            return 0
        scenario = load_config(args.config)
        scenario = replace(scenario, seed=args.seed)
        if args.trials is not None:
            scenario = replace(scenario, trials=args.trials)
        metrics = _RUNNERS[args.command](scenario, threads=args.threads)
        name = os.path.splitext(os.path.basename(args.config))[0]
        csv_path = save_metrics(metrics, args.out, name, scenario)
        print(csv_path)
        return 0
    except (ConfigError, OSError, ValueError, ArithmeticError) as exc:
        print(f"smchanest: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
