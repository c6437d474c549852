"""``conederiv`` command line: run experiments and write JSON/CSV artifacts.

Exit status: 0 when every expectation is met, 1 on an unmet expectation or a
sampling failure, 2 on a bad config or an unknown fixture.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .fixtures import UnknownFixture, catalog, get_fixture
from .paths import PiecewisePath
from .report import (
    ConfigError,
    ExperimentConfig,
    emit_curves,
    eval_table,
    load_config,
    parse_config,
    run_experiment,
    with_overrides,
    write_report,
    write_table,
)

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2
DEFAULT_OUT = "conederiv-out"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON experiment config")
    p.add_argument("--out", help=f"output directory (default: config 'out' or ./{DEFAULT_OUT})")
    p.add_argument("--seed", type=int)
    p.add_argument("--delta0", type=float)
    p.add_argument("--theta0", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--levels", type=int)
    p.add_argument("--tol-abs", type=float, dest="tol_abs")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="conederiv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="tangential/directional estimate on one fixture")
    _common(p)
    p.add_argument("--fixture")
    p.add_argument("--estimator", action="append", choices=["tangential", "directional"])

    p = sub.add_parser("chain", help="chain condition and composite check on one case")
    _common(p)
    p.add_argument("--case")

    p = sub.add_parser("path", help="evaluate an interpolating path from a JSON file")
    _common(p)
    p.add_argument("path_file", nargs="?", help="path JSON (base, knots_t, knots_x, velocity)")
    p.add_argument("--fixture", help="also run the pullback test for this fixture")
    p.add_argument("--n-eval", type=int, dest="n_eval")

    p = sub.add_parser("suite", help="every fixture and chain case")
    _common(p)

    p = sub.add_parser("fixtures", help="list fixtures or evaluate one")
    fsub = p.add_subparsers(dest="action", required=True)
    fsub.add_parser("list")
    ev = fsub.add_parser("eval")
    ev.add_argument("name")
    ev.add_argument("point", nargs="+", help="coordinates, space or comma separated")
    return parser


def _config_from_args(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.kind != args.command:
            raise ConfigError(f"config kind {cfg.kind!r} does not match subcommand {args.command!r}")
        return cfg
    data: dict = {"kind": args.command}
    if args.command == "estimate":
        if not args.fixture:
            raise ConfigError("estimate needs --fixture or --config")
        data["fixture"] = args.fixture
        if args.estimator:
            data["estimators"] = args.estimator
    elif args.command == "chain":
        if not args.case:
            raise ConfigError("chain needs --case or --config")
        data["case"] = args.case
    elif args.command == "path":
        if not args.path_file:
            raise ConfigError("path needs a path file or --config")
        data["path_file"] = str(Path(args.path_file).resolve())
        if args.fixture:
            data["fixture"] = args.fixture
        if args.n_eval is not None:
            data["n_eval"] = args.n_eval
    return parse_config(data)


def _run(args) -> int:
    cfg = _config_from_args(args)
    sched = {k: getattr(args, k) for k in ("delta0", "theta0", "rho", "levels") if getattr(args, k) is not None}
    cfg = with_overrides(cfg, seed=args.seed, schedule=sched, tol_abs=args.tol_abs)
    out = Path(args.out or cfg.out or DEFAULT_OUT)

    report = run_experiment(cfg)
    write_report(report, out / "report.json")
    if any(e.get("curves") for e in report.entries):
        emit_curves(report, out / "curves")
    if cfg.kind == "path":
        p = PiecewisePath.from_dict(cfg.path)
        write_table(eval_table(p, cfg.n_eval), p.m, out / "path_table.csv")

    for e in report.entries:
        mark = "PASS" if e["passed"] else "FAIL"
        print(f"{mark} {e['name']}: {e['outcome']} (expected {e['expected']}) {e['reason']}")
    n_ok = sum(e["passed"] for e in report.entries)
    print(f"{n_ok}/{len(report.entries)} expectations met; report at {out / 'report.json'}")
    return EXIT_OK if report.all_passed else EXIT_FAILED


def _fixtures(args) -> int:
    if args.action == "list":
        for name, fx in catalog().items():
            exp = ", ".join(f"{k}={v}" for k, v in fx.expected.items() if k in ("tangential", "directional"))
            print(f"{name}\tm={fx.f.m} n={fx.f.n} dim V={fx.subspace.dim}\t{exp}\t{fx.description}")
        return EXIT_OK
    fx = get_fixture(args.name)
    try:
        coords = [float(c) for tok in args.point for c in tok.split(",") if c.strip()]
    except ValueError:
        raise ConfigError(f"point must be numbers, got {' '.join(args.point)}") from None
    if len(coords) != fx.f.m:
        raise ConfigError(f"{fx.name} takes {fx.f.m} coordinates, got {len(coords)}")
    print(json.dumps(fx.f(np.array(coords)).tolist()))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "fixtures":
            return _fixtures(args)
        return _run(args)
    except UnknownFixture as exc:
        print(f"error: unknown fixture: {exc.args[0] if exc.args else exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
