"""Command line: ``slimnav <command> [--config PATH] [--preset NAME] [--seed N] [--out DIR] [--workers N]``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime contract
violation (including missing or mismatched artifacts).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__, experiment
from .config import PRESETS, ExperimentConfig, load_config
from .errors import ConfigError, SlimnavError

log = logging.getLogger("slimnav")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON experiment config (defaults to OUT/config.json if present)")
    p.add_argument("--preset", choices=PRESETS, help="base preset the config overlays (default: desk)")
    p.add_argument("--seed", type=int, help="override the global seed")
    p.add_argument("--out", type=Path, default=Path("run"), help="artifact directory (default: ./run)")
    p.add_argument("--workers", type=int, default=1, help="processes for hold-out evaluation")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slimnav", description="Energy-aware navigation with slimmable depth perception.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "gen-world": "generate the world and frozen validation/test episode sets",
        "collect-mde-data": "sample camera/depth pairs from the training region",
        "train-mde": "train the slimmable depth network and report test R2",
        "train-policy": "train a navigation policy (adaptive or a static baseline)",
        "eval": "evaluate every trained policy on the test set",
        "bench": "cost sweep over the energy profile",
        "analyze": "saturation, heatmaps and context correlations from saved traces",
        "show-config": "print the fully materialized config and its hash",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text, description=text)
        _common(p)
        if name == "train-policy":
            p.add_argument("--variant", default="adaptive",
                           help="'adaptive' or 'static-<alpha>' for a configured static size")
    return parser


def _resolve(args) -> ExperimentConfig:
    path = args.config
    if path is None and args.command != "gen-world" and (args.out / "config.json").exists():
        path = args.out / "config.json"
    return load_config(path, args.preset, args.seed)


def run(args) -> object:
    cfg = _resolve(args)
    out: Path = args.out
    if args.workers < 1:
        raise ConfigError("--workers must be at least 1")
    cmd = args.command
    if cmd == "show-config":
        return {"config_hash": cfg.hash(), "config": cfg.to_json()}
    if cmd == "gen-world":
        return experiment.gen_world(cfg, out)
    if cmd == "bench":
        return experiment.bench(cfg, out)
    if not out.is_dir():
        raise experiment.ArtifactError(f"artifact directory {out} does not exist; run gen-world first")
    if cmd == "collect-mde-data":
        return experiment.collect_data(cfg, out)
    if cmd == "train-mde":
        return experiment.train_mde(cfg, out)
    if cmd == "train-policy":
        return experiment.train_variant(cfg, out, args.variant, progress=args.verbose)
    if cmd == "eval":
        return experiment.evaluate(cfg, out, args.workers)
    if cmd == "analyze":
        return experiment.analyze(cfg, out)
    raise ConfigError(f"unknown command {cmd}")  # unreachable with argparse choices


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        result = run(args)
    except ConfigError as exc:
        print(f"slimnav: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SlimnavError, ValueError, FloatingPointError, OSError) as exc:
        print(f"slimnav: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if result is not None:
        print(json.dumps(result, indent=2, sort_keys=True, default=str))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
