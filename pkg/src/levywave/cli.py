"""Command-line entry point: ``levywave <subcommand> [--config PATH] ...``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from pathlib import Path

from . import acceptance, config, runner
from .errors import LevyWaveError
from .skeleton import required_window, sample_skeleton, stream_key
from .solver import solve_on_skeleton

ESTIMATE_KINDS = ("variance", "covariance", "lln")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="levywave", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        sp.add_argument("--config", type=Path, required=needs_config,
                        help="YAML experiment config")
        sp.add_argument("--seed", type=int, help="master seed (overrides LEVYWAVE_SEED)")
        sp.add_argument("--workers", type=int, help="worker processes (overrides LEVYWAVE_WORKERS)")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--check", action="store_true",
                        help="exit nonzero if any expectation in the config fails")

    common(sub.add_parser("simulate", help="dump one skeleton and its solution"))
    for name, text in (("estimate", "variance, covariance or LLN estimates"),
                       ("clt", "Wasserstein distance to the normal law"),
                       ("asclt", "logarithmic average along one path"),
                       ("indep", "covariance of normalized integral and point values"),
                       ("probe", "commutation-identity probes as JSON lines")):
        common(sub.add_parser(name, help=text))
    chk = sub.add_parser("check", help="run the acceptance suite")
    common(chk, needs_config=False)
    chk.add_argument("--only", type=str, help="comma-separated criterion numbers")
    return p


def _load(args, expected):
    cfg = config.load(args.config)
    if cfg.experiment not in expected:
        raise LevyWaveError(
            f"config experiment {cfg.experiment!r} does not match subcommand "
            f"{args.command!r} (expects {'/'.join(expected)})")
    return config.apply_overrides(cfg, args.seed, args.workers, args.out)


def _simulate(args) -> int:
    """Write one skeleton (text form) and the solution at its jumps."""
    cfg = config.apply_overrides(config.load(args.config), args.seed, args.workers, args.out)
    measure, sigma = cfg.measure_spec(), cfg.nonlinearity()
    window = required_window(cfg.t, max(cfg.R_grid))
    sk = sample_skeleton(window, measure, (cfg.master_seed, stream_key("simulate"), 0))
    sol = solve_on_skeleton(sk, sigma, measure)
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    (out / "skeleton.txt").write_text(sk.to_text())
    lines = ["s,y,z,u"] + [f"{a!r},{b!r},{c!r},{u!r}" for a, b, c, u in
                           zip(sk.s.tolist(), sk.y.tolist(), sk.z.tolist(), sol.values.tolist())]
    (out / "solution.csv").write_text("\n".join(lines) + "\n")
    print(f"{len(sk)} jumps written to {out}")
    return 0


def _experiment(args, kinds) -> int:
    cfg = _load(args, kinds)
    manifest = runner.run(cfg)
    out = Path(cfg.output)
    print((out / "summary.csv").read_text(), end="")
    if args.check:
        for c in manifest.checks:
            print(json.dumps(c, sort_keys=True))
        if not manifest.checks:
            print("no expectations in config")
        return 0 if manifest.passed else 1
    return 0


def _check(args) -> int:
    only = [int(k) for k in args.only.split(",")] if args.only else None
    seed = args.seed
    if seed is None:
        seed = int(os.environ.get("LEVYWAVE_SEED", acceptance.MASTER_SEED))
    workers = args.workers
    if args.config is not None and config.is_empty(args.config):
        args.config = None
    if args.config is not None:
        # a config turns the check into an expectation run of that experiment
        cfg = config.apply_overrides(config.load(args.config), args.seed, args.workers, args.out)
        manifest = runner.run(cfg)
        for c in manifest.checks:
            print(json.dumps(c, sort_keys=True))
        return 0 if manifest.passed else 1
    results = acceptance.check_suite(only=only, seed=seed, workers=workers, out=args.out)
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            if args.command == "simulate":
                return _simulate(args)
            if args.command == "check":
                return _check(args)
            kinds = ESTIMATE_KINDS if args.command == "estimate" else (args.command,)
            return _experiment(args, kinds)
    except LevyWaveError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
