"""Command-line interface.

::

    oudrift classify   --config model.json
    oudrift simulate   --config run.json --out DIR [--seed N] [--set T=50]
    oudrift estimate   (--path path.csv | --config run.json) [--seed N]
    oudrift experiment --config experiment.json [--out DIR] [--set replicates=20]
    oudrift selftest

``--config`` accepts either an experiment file (an object with a ``model``
key, see :mod:`oudrift.harness`) or a bare model file. Exit status is 0 on
success, 1 when a verdict or check fails or the computation errors, and 2
on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from typing import List, Optional

import numpy as np

from . import __version__, fileio, harness, selftest
from .errors import ConfigError, OUError
from .estimate import estimate
from .simulate import SimConfig, simulate_path, stats_from_path

log = logging.getLogger("oudrift")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _fmt_matrix(M) -> str:
    M = np.atleast_2d(M)
    return "\n".join("  " + " ".join(fileio.fmt(v) for v in row) for row in M)


def _fmt_complex(z) -> str:
    re, im = fileio.fmt(z.real), fileio.fmt(abs(z.imag))
    if z.imag == 0:
        return re
    return f"{re}{'-' if z.imag < 0 else '+'}{im}i"


def _load(args, need_config: bool = True) -> harness.ExperimentConfig:
    if not args.config:
        if need_config:
            raise UsageError("--config is required")
        data = {"model": {}}
    else:
        data = fileio.read_json(args.config)
        if not isinstance(data, dict):
            raise ConfigError("configuration must be an object")
        if "model" not in data:
            data = {"model": data, "experiment": "classify-only"}
    data = harness.apply_overrides(data, args.set or [])
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "out", None):
        data["output_dir"] = args.out
    return harness.ExperimentConfig.from_dict(data)


def _model(cfg: harness.ExperimentConfig, check_rank: bool = True):
    spec = dict(cfg.model)
    if not check_rank:
        spec["check_rank"] = False
    return fileio.model_from_dict(spec)


def cmd_classify(args) -> int:
    cfg = _load(args)
    s = harness.classification_summary(_model(cfg, check_rank=False))
    print("eigenvalues:")
    for re, im in s["eigenvalues"]:
        print("  " + _fmt_complex(complex(re, im)))
    print(f"class: {s['kind']}")
    print(f"p0: {s['p0']}")
    print(f"p1: {s['p1']}")
    print(f"negative/imaginary/zero: {s['n_negative']}/{s['n_imaginary']}/{s['n_zero']}")
    print(f"lambda0: {'-' if s['lambda0'] is None else fileio.fmt(s['lambda0'])}")
    print(f"Lambda0: {fileio.fmt(s['Lambda0'])}")
    print(f"rho: {s['rho']}")
    print(f"gamma: {s['gamma']}")
    print(f"(a) rank condition: {str(s['rank_condition']).lower()} (rank {s['controllability_rank']})")
    print(f"(b) distinct positive eigenvalues: {str(s['condition_b']).lower()}")
    print(f"(b') minimal polynomial degree p: {str(s['condition_b_prime']).lower()}")
    return EXIT_OK


def _print_estimate(res, model=None):
    print("F_hat:")
    print(_fmt_matrix(res.F_hat))
    print("AAt_hat:")
    print(_fmt_matrix(res.AAt_hat))
    print(f"T: {fileio.fmt(res.T)}")
    print(f"lambda_min_CT: {fileio.fmt(res.lambda_min_CT)}")
    print(f"lambda_max_CT: {fileio.fmt(res.lambda_max_CT)}")
    if res.error_fro is not None:
        print(f"error_fro: {fileio.fmt(res.error_fro)}")


def _write_stats(path, st, res):
    rows = []
    for name, M in (("C_T", st.C_T), ("S_T", st.S_T), ("QV", st.QV), ("F_hat", res.F_hat)):
        for i in range(M.shape[0]):
            for j in range(M.shape[1]):
                rows.append((name, i + 1, j + 1, float(M[i, j])))
    for i, v in enumerate(st.Y_end):
        rows.append(("Y_end", i + 1, 1, float(v)))
    rows += [("T", 1, 1, float(st.T)), ("dt", 1, 1, float(st.dt)), ("n_steps", 1, 1, float(st.n_steps))]
    fileio.write_table_csv(path, ("stat_name", "i", "j", "value"), rows)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = cfg.output_dir
    if not out:
        raise UsageError("simulate needs --out or output_dir in the config")
    model = _model(cfg)
    sim = SimConfig(dt=cfg.dt, T=cfg.horizon, seed=cfg.seed, store_path=True)
    times, path, st = simulate_path(model, sim)
    fileio.ensure_dir(out)
    fileio.write_path_csv(os.path.join(out, "path.csv"), times, path)
    res = estimate(st, model)
    _write_stats(os.path.join(out, "stats.csv"), st, res)
    log.info("wrote %s and %s", os.path.join(out, "path.csv"), os.path.join(out, "stats.csv"))
    if not args.quiet:
        _print_estimate(res)
    return EXIT_OK


def cmd_estimate(args) -> int:
    if args.path:
        _, path, dt = fileio.read_path_csv(args.path)
        st = stats_from_path(path, dt)
        model = None
        if args.config:
            model = _model(_load(args))
    else:
        cfg = _load(args)
        model = _model(cfg)
        st = simulate_path(model, SimConfig(dt=cfg.dt, T=cfg.horizon, seed=cfg.seed))[2]
    _print_estimate(estimate(st, model))
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _load(args)
    result = harness.run_experiment(cfg)
    if not args.quiet:
        for name, v in sorted(result.verdicts.items()):
            status = "PASS" if v.passed else "FAIL"
            print(
                f"{status}  {name} [{v.criterion}]: {fileio.fmt(v.value)} {v.relation} {fileio.fmt(v.threshold)}"
            )
        if cfg.output_dir:
            print(f"results written to {cfg.output_dir}")
    return EXIT_OK if result.passed else EXIT_FAIL


def cmd_selftest(args) -> int:
    return EXIT_OK if selftest.run(verbose=not args.quiet) else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment or model JSON file")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="base seed (unsigned 64-bit)")
    common.add_argument("--quiet", action="store_true", help="print only errors")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging")

    parser = argparse.ArgumentParser(prog="oudrift", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("classify", parents=[common], help="classify a drift and check assumptions")
    sub.add_parser("simulate", parents=[common], help="simulate one path and write CSVs")
    p = sub.add_parser("estimate", parents=[common], help="estimate F and AA' from a path")
    p.add_argument("--path", help="path CSV with header t,y1,...,yp")
    sub.add_parser("experiment", parents=[common], help="run an experiment recipe")
    sub.add_parser("selftest", parents=[common], help="run the oracle suite")
    return parser


COMMANDS = {
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "experiment": cmd_experiment,
    "selftest": cmd_selftest,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    level = logging.ERROR if args.quiet else (logging.DEBUG if args.verbose > 1 else
                                              logging.INFO if args.verbose else logging.WARNING)
    logging.basicConfig(level=level, format="%(levelname)s: %(message)s")
    if args.seed is not None and not 0 <= args.seed < 2**64:
        print("oudrift: error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"oudrift: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OUError as exc:
        print(f"oudrift: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
