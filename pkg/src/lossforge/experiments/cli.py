"""Command line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from .. import __version__
from ..engine import SimConfig, histogram, loss_statistics, run_simulation
from .documents import DocumentError, parse_portfolio_document
from .io import write_csv
from .presets import PRESETS, replay, run_preset

log = logging.getLogger("lossforge")

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors count as configuration errors."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text):
    try:
        values = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _global_options(suppress: bool) -> argparse.ArgumentParser:
    # attached both to the main parser and to every subcommand, so the flags work in either place
    d = argparse.SUPPRESS if suppress else None
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d, help="run seed (fallback: LOSSFORGE_SEED, then 0)")
    p.add_argument("--scenarios", type=int, default=d, help="Monte Carlo scenarios per run")
    p.add_argument("--out", default=d, help="output directory (default: current directory)")
    p.add_argument("--threads", type=int, default=d, help="worker threads; results do not depend on it")
    p.add_argument("-v", "--verbose", action="store_true", default=d)
    return p


def _model_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("model overrides")
    for flag, dest in (("--mu", "mu"), ("--sigma", "sigma"), ("--T", "T"), ("--v0", "v0"),
                       ("--F", "F"), ("--lam", "lam"), ("--mu-J", "mu_J"), ("--sigma-J", "sigma_J")):
        g.add_argument(flag, dest=dest, type=float)
    g.add_argument("--sizes", type=_int_list, help="portfolio sizes, e.g. 10,100,1000")
    g.add_argument("--drill-sizes", dest="drill_sizes", type=_int_list)
    g.add_argument("--surface-scenarios", dest="surface_scenarios", type=int)
    g.add_argument("--bins", type=int)
    g.add_argument("--jump-law", dest="jump_law", choices=("log", "moments"))
    g.add_argument("--scheme", choices=("terminal", "path"))
    return p


OVERRIDE_KEYS = ("mu", "sigma", "T", "v0", "F", "lam", "mu_J", "sigma_J", "sizes", "drill_sizes",
                 "surface_scenarios", "bins", "jump_law", "scheme")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lossforge", description="Credit portfolio loss experiments.",
                     parents=[_global_options(False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = [_global_options(True)]
    for name, preset in PRESETS.items():
        sub.add_parser(name, help=preset.target, parents=common + [_model_options()])
    sub.add_parser("list", help="list presets", parents=common)
    rp = sub.add_parser("replay", help="re-run a manifest and compare checksums", parents=common)
    rp.add_argument("manifest")
    sp = sub.add_parser("simulate", help="simulate a portfolio document", parents=common)
    sp.add_argument("document")
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--jump-mode", dest="jump_mode", choices=("none", "independent", "correlated"), default="none")
    sp.add_argument("--no-correlation", dest="correlation_enabled", action="store_false")
    sp.add_argument("--rescale-correlated-jumps", action="store_true")
    sp.add_argument("--alpha", type=float, default=0.999)
    sp.add_argument("--bins", type=int, default=100)
    return parser


def _seed(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("LOSSFORGE_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"LOSSFORGE_SEED must be an integer, got {env!r}") from None


def _simulate(args, out: Path, seed: int, threads: int) -> int:
    portfolio = parse_portfolio_document(args.document)
    cfg = SimConfig(n_scenarios=args.scenarios or 100_000, seed=seed, maturity=args.T,
                    jump_mode=args.jump_mode, correlation_enabled=args.correlation_enabled,
                    rescale_correlated_jumps=args.rescale_correlated_jumps, alpha=args.alpha)
    sample = run_simulation(portfolio, cfg, threads)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        stats = loss_statistics(sample, cfg.alpha)
    for w in caught:
        log.warning("%s", w.message)
    h = histogram(sample, args.bins)
    out.mkdir(parents=True, exist_ok=True)
    stem = Path(args.document).stem
    write_csv(out / f"{stem}_hist.csv", ["bin_left", "bin_right", "count", "density"],
              zip(h.edges[:-1], h.edges[1:], h.counts, h.density))
    d = stats.as_dict()
    d["zero_count"] = h.zero_count
    write_csv(out / f"{stem}_stats.csv", list(d), [d])
    print(json.dumps({k: v for k, v in d.items()}, indent=2, default=float))
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    for key in ("seed", "scenarios", "out", "threads", "verbose"):
        if not hasattr(args, key):
            setattr(args, key, None)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    out = Path(args.out or ".")
    threads = args.threads or 1
    try:
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        seed = _seed(args)
        if args.command == "list":
            for name, p in PRESETS.items():
                print(f"{name:14s} {p.target}")
            return EXIT_OK
        if args.command == "replay":
            diffs = replay(args.manifest, None if args.out is None else out, threads)
            if diffs:
                for fname, (want, got) in diffs.items():
                    print(f"MISMATCH {fname}: expected {want}, got {got}")
                return EXIT_RUNTIME
            print("replay OK: all checksums match")
            return EXIT_OK
        if args.command == "simulate":
            return _simulate(args, out, seed, threads)
        overrides = {k: getattr(args, k) for k in OVERRIDE_KEYS if getattr(args, k, None) is not None}
        overrides["seed"] = seed
        if args.scenarios is not None:
            overrides["n_scenarios"] = args.scenarios
        manifest = run_preset(args.command, overrides, out, threads)
        log.info("%s done in %.1f s", args.command, manifest.wall_time)
        for fname in manifest.outputs:
            print(out / fname)
        return EXIT_OK
    except (ConfigError, DocumentError, KeyError, ValueError) as exc:
        print(f"lossforge: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"lossforge: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
