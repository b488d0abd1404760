"""Command-line entry point: ``contact-replay {train,eval,sweep,plot,inspect-buffer}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .core import ContractViolation, load_buffer
from .env import ConfigError
from .harness.analysis import inspect_buffer, label_for, plot, sweep
from .harness.config import load_config, parse_set_flags
from .harness.training import TrainingAborted, evaluate, train
from .prioritizers import KINDS

EXIT_OK, EXIT_CONFIG, EXIT_ABORT, EXIT_IO = 0, 1, 2, 3


def _config(args):
    return load_config(args.config, parse_set_flags(args.set))


def cmd_train(args) -> None:
    print(train(_config(args)))


def cmd_eval(args) -> None:
    cfg = _config(args) if (args.config or args.set) else None
    rate = evaluate(args.checkpoint, args.episodes, args.seed, cfg.env if cfg else None)
    print(f"success_rate {rate!r}")


def cmd_sweep(args) -> None:
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    print(sweep(_config(args), args.param, values))


def cmd_plot(args) -> None:
    labels = args.label or [label_for(p) for p in args.metrics]
    if len(labels) != len(args.metrics):
        raise ConfigError("give one --label per metrics file")
    print(plot(dict(zip(labels, args.metrics)), args.out, args.title))


def cmd_inspect(args) -> None:
    cfg = _config(args)
    buffer = load_buffer(args.buffer)
    kinds = []
    for name in args.kinds.split(","):
        if name.strip() not in KINDS:
            raise ConfigError(f"unknown prioritizer {name!r}; choose from {', '.join(KINDS)}")
        kinds.append(load_config(overrides={"prioritizer.kind": name.strip()},
                                 base=cfg).prioritizer)
    rows = inspect_buffer(buffer, kinds)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["index"])
        writer.writeheader()
        writer.writerows(rows)
    finally:
        if args.out:
            fh.close()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="contact-replay", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", type=Path, help="INI-style config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one dotted config key (repeatable)")
        return p

    p = with_config(sub.add_parser("train", help="train every seed and write metrics"))
    p.set_defaults(func=cmd_train)

    p = with_config(sub.add_parser("eval", help="noise-free success rate of a checkpoint"))
    p.add_argument("checkpoint", type=Path)
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = with_config(sub.add_parser("sweep", help="train over a grid of one config key"))
    p.add_argument("--param", required=True, help="dotted config key, e.g. prioritizer.sigmoid.T")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plot", help="median and IQR success curves as SVG")
    p.add_argument("metrics", nargs="+", type=Path)
    p.add_argument("--label", action="append", help="series label, one per metrics file")
    p.add_argument("--out", type=Path, default=Path("success.svg"))
    p.add_argument("--title")
    p.set_defaults(func=cmd_plot)

    p = with_config(sub.add_parser("inspect-buffer", help="dump per-episode priorities as CSV"))
    p.add_argument("buffer", type=Path)
    p.add_argument("--kinds", default="uniform,cebp", help="comma-separated prioritizers")
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigError, ContractViolation) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except TrainingAborted as exc:
        print(f"training aborted: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except (OSError, ValueError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
