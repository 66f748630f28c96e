"""Command-line entry point.

Subcommands:

- ``train``      train one or more seeds of a configuration
- ``aggregate``  combine finished run directories into summary CSVs
- ``plot``       write learning-curve CSV (and PNGs) from run directories
- ``selftest``   fast internal consistency checks

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import RunConfig, apply_pairs, load_config, parse_assignments, validate
from .errors import ConfigError, NumericalError
from .harness import aggregate, plot, run

log = logging.getLogger(__name__)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bexp",
                                     description="soft actor-critic with model-ensemble "
                                                 "exploration and value expansion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one or more seeds of a configuration")
    p.add_argument("--config", type=Path, default=None,
                   help="config file with key = value lines (defaults apply otherwise)")
    p.add_argument("--out", type=Path, default=Path("runs"), help="parent directory for runs")
    p.add_argument("--seed", type=int, action="append", default=None,
                   help="train only this seed (repeatable); default: seeds from the config")
    p.add_argument("--env", help="environment name")
    p.add_argument("--algo", help="algorithm kind (sac, sac+be, sac+qu, sac+mve, ...)")
    p.add_argument("--steps", type=int, help="total environment steps")
    p.add_argument("--N", type=int, dest="n_candidates", help="candidate count")
    p.add_argument("--S", type=int, dest="s_samples", help="selection draw count")
    p.add_argument("--M", type=int, dest="ensemble_size", help="ensemble member count")
    p.add_argument("--H", type=int, dest="horizon", help="value-expansion horizon")
    p.add_argument("--G", type=int, dest="updates_per_step", help="update rounds per step")
    p.add_argument("--temperature", type=float, help="selection temperature")
    p.add_argument("--save-buffer", action="store_true",
                   help="also checkpoint the replay buffer at the end")
    p.add_argument("overrides", nargs="*", metavar="key=value",
                   help="config overrides, e.g. algo=sac+be total_steps=5000")

    p = sub.add_parser("aggregate", help="combine run directories into summary CSVs")
    p.add_argument("run_dirs", nargs="+", type=Path)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("plot", help="write learning curves from run directories")
    p.add_argument("run_dirs", nargs="+", type=Path)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--smooth", type=int, default=10, help="trailing-average window")
    p.add_argument("--no-render", action="store_true", help="CSV only, skip PNGs")

    sub.add_parser("selftest", help="run fast internal consistency checks")
    return parser


_FLAG_FIELDS = (("env", "env"), ("algo", "algo"), ("steps", "total_steps"),
                ("n_candidates", "n_candidates"), ("s_samples", "s_samples"),
                ("ensemble_size", "ensemble_size"), ("horizon", "horizon"),
                ("updates_per_step", "updates_per_step"),
                ("temperature", "selector_temperature"))


def _cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    apply_pairs(cfg, parse_assignments(args.overrides))
    for attr, field in _FLAG_FIELDS:
        value = getattr(args, attr)
        if value is not None:
            setattr(cfg, field, value)
    validate(cfg)
    seeds = args.seed if args.seed else list(cfg.seeds)
    for seed in seeds:
        run_dir = args.out / f"{cfg.env}_{cfg.algo}_seed{seed}"
        log.info("training %s %s seed %d -> %s", cfg.env, cfg.algo, seed, run_dir)
        result = run(cfg, seed, run_dir, save_buffer=args.save_buffer)
        last = result.metrics[-1] if result.metrics else None
        if last:
            log.info("done: step %d mean return %.2f", last["step"], last["mean_return"])
    return 0


def _cmd_aggregate(args) -> int:
    agg = aggregate(args.run_dirs, args.out)
    for (env, algo), g in agg.items():
        print(f"{env:12s} {algo:12s} seeds={len(g['seeds'])} "
              f"final {g['final_mean']:.2f} +- {g['final_std']:.2f}")
    return 0


def _cmd_plot(args) -> int:
    agg = aggregate(args.run_dirs)
    for path in plot(agg, args.out, smooth_window=args.smooth, render=not args.no_render):
        print(path)
    return 0


def _cmd_selftest(_args) -> int:
    from .selftest import run_selftest
    return 0 if run_selftest() else 1


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    args = _build_parser().parse_args(argv)
    handler = {"train": _cmd_train, "aggregate": _cmd_aggregate,
               "plot": _cmd_plot, "selftest": _cmd_selftest}[args.command]
    try:
        return handler(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
