"""Command-line entry point: ``stablemip <experiment> [options]``."""
from __future__ import annotations

import argparse
import logging
import sys

from .errors import NumericalAbort, ValidationError
from . import experiments as ex

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stablemip",
                                     description="Particle approximation experiments for stable-driven density-dependent SDEs.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON file with experiment keys")
    common.add_argument("--seed", type=int, help="master seed (overrides the config file)")
    common.add_argument("--threads", type=int, default=1, help="worker threads for replications")
    common.add_argument("--out-dir", help="directory for CSV/JSON outputs")
    common.add_argument("--scenario", help="registered scenario name")
    common.add_argument("-v", "--verbose", action="store_true")
    for name, help_ in [("convergence", "density error against N"),
                        ("pathwise", "coupled particle-1 vs limit-SDE error against N"),
                        ("weak", "total-variation error of particle 1 at the final time"),
                        ("cross-alpha", "density rates for several alphas with shared seeds"),
                        ("kernel-check", "self-test of noise, heat kernel and KDE")]:
        sub.add_parser(name, parents=[common], help=help_)
    return parser


def load_config(args) -> ex.ExperimentConfig:
    overrides = {"seed": args.seed, "scenario": args.scenario}
    if args.config:
        cfg = ex.ExperimentConfig.from_file(args.config, **overrides)
    else:
        cfg = ex.ExperimentConfig.from_mapping({}, **overrides)
    cfg.out_dir = args.out_dir
    cfg.threads = args.threads
    return cfg


def _print_fits(label: str, fits: list) -> None:
    print(f"# {label}")
    print("t,m,slope,theoretical_slope,r_squared")
    for f in fits:
        print(f"{f.get('t', '')},{f['m']},{f['slope']:.4f},{f['theoretical_slope']:.4f},{f['r_squared']:.4f}")


def run(args) -> int:
    cfg = load_config(args)
    if args.command == "convergence":
        res = ex.run_convergence(cfg)
        _print_fits(f"density convergence, alpha={res.alpha:g}", res.summary["fits"])
    elif args.command == "pathwise":
        res = ex.run_pathwise(cfg)
        print("N,median,median_se")
        for row in res.summary["medians"]:
            print(f"{row['N']},{row['median']:.6g},{row['bootstrap_se']:.3g}")
        _print_fits(f"pathwise convergence, alpha={res.alpha:g}", res.summary["fits"])
    elif args.command == "weak":
        res = ex.run_weak(cfg)
        print("N,tv,bootstrap_se,band_lo,band_hi,n_samples")
        for row in res.summary["estimates"]:
            print(f"{row['N']},{row['value']:.6g},{row['bootstrap_se']:.3g},{row['band'][0]:.6g},"
                  f"{row['band'][1]:.6g},{row['n_samples']}")
        print(f"# decrease exceeds band: {res.summary['trend']['decrease_exceeds_band']}")
    elif args.command == "cross-alpha":
        res = ex.run_cross_alpha(cfg)
        print("alpha,slope")
        for a, s in sorted(res.slopes.items()):
            print(f"{a:g},{s:.4f}")
        print(f"# max slope difference: {res.max_slope_difference:.4f}")
    elif args.command == "kernel-check":
        rep = ex.run_kernel_check(cfg)
        print("check,value,tol,passed")
        for name, c in rep["checks"].items():
            print(f"{name},{c['value']:.3e},{c['tol']:.1e},{c['passed']}")
        if not rep["passed"]:
            return EXIT_NUMERICAL
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return run(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalAbort as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
