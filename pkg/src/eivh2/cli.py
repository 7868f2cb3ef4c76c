"""Command-line front end: simulate, analyze, truth-h2, montecarlo."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import (MultiplierFamily, assemble_analysis_lft,
                       assemble_h2_sdp, build_analysis_regression,
                       solve_h2_bound, verify_certificate,
                       weighted_right_inverse)
from .bench import (ExperimentConfig, G_CHOICES, emit_csv, load_config,
                    load_system, run_montecarlo)
from .data import read_dataset, write_dataset
from .exceptions import EivError
from .lti import true_h2
from .regression import right_inverse_moore_penrose
from .sdp import OPTIMAL
from .simulate import corrupt, simulate


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, default=None,
                   help="experiment config JSON (defaults to the built-in "
                        "benchmark configuration)")
    p.add_argument("--out", type=Path, default=Path("."),
                   help="output directory")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config master seed")


def _load(args) -> ExperimentConfig:
    config = load_config(args.config) if args.config else ExperimentConfig()
    if getattr(args, "seed", None) is not None:
        config = replace(config, master_seed=args.seed)
    if getattr(args, "g", None):
        config = replace(config, g_choice=args.g)
    if getattr(args, "no_reduce", False):
        config = replace(config, reduce=False)
    return config


def _cmd_simulate(args) -> int:
    config = _load(args)
    system = load_system(config.system)
    rng = np.random.default_rng(config.master_seed)
    N = args.samples
    x0 = rng.uniform(-1.0, 1.0, size=system.n)
    wp = rng.uniform(-1.0, 1.0, size=(system.m_p, N - 1))
    d = rng.uniform(-config.bounds.d_bar, config.bounds.d_bar) if system.m_d else 0.0
    dataset = corrupt(simulate(system, x0, wp, d), config.bounds, rng)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / f"dataset_N{N}_seed{config.master_seed}.csv"
    write_dataset(dataset, path, system=system)
    print(f"wrote {path} (+ truth sidecar)")
    return 0


def _cmd_analyze(args) -> int:
    config = _load(args)
    system = load_system(config.system)
    dataset = read_dataset(args.dataset)
    reg, uset = build_analysis_regression(dataset, system.Bd, config.bounds)
    g_choice = config.g_choice or "weighted"
    if g_choice == "weighted":
        try:
            G = weighted_right_inverse(reg, uset)
        except ValueError:
            G = right_inverse_moore_penrose(reg.X)
    else:
        G = right_inverse_moore_penrose(reg.X)
    lft = assemble_analysis_lft(reg, uset, G, reduce=config.reduce)
    for line in lft.reduction_log:
        print(f"  {line}")
    problem = assemble_h2_sdp(lft, MultiplierFamily(lft.uncertainty),
                              eps=config.eps)
    cert = solve_h2_bound(problem, tol=config.solver_tol, eps=config.eps)
    args.out.mkdir(parents=True, exist_ok=True)
    path = args.out / (Path(args.dataset).stem + ".certificate.json")
    with open(path, "w") as fh:
        json.dump(cert.to_json_dict(), fh, indent=1)
    print(f"status: {cert.status}")
    if cert.status == OPTIMAL:
        print(f"gamma:  {cert.gamma!r}  (certified H2 upper bound)")
        report = verify_certificate(lft, cert,
                                    n_samples=max(config.verify_samples, 1),
                                    seed=config.master_seed)
        print(f"plug-back verification: {'PASS' if report.ok else 'FAIL'}")
        for v in report.violations:
            print(f"  {v}")
    print(f"wrote {path}")
    return 0 if cert.status == OPTIMAL else 1


def _cmd_truth_h2(args) -> int:
    system = load_system(args.system)
    print(repr(true_h2(system)))
    return 0


def _cmd_montecarlo(args) -> int:
    config = _load(args)
    records, summary = run_montecarlo(config, jobs=args.jobs)
    args.out.mkdir(parents=True, exist_ok=True)
    records_path = args.out / "records.csv"
    summary_path = args.out / "summary.csv"
    emit_csv(records, records_path)
    emit_csv(summary, summary_path)
    print(f"{'N':>6} {'G':<14} {'feasible':>9} {'median eps_G':>13}")
    for row in summary.rows:
        med = f"{row.median_eps_g:.4f}" if row.median_eps_g is not None else "-"
        print(f"{row.N:>6} {row.g_choice:<14} "
              f"{row.feasibility_rate:>9.3f} {med:>13}")
    print(f"wrote {records_path} and {summary_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eivh2",
        description="Certified H2-norm upper bounds from noisy trajectory "
                    "data (errors-in-variables).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a dataset CSV")
    _add_common(p)
    p.add_argument("-N", "--samples", type=int, default=100,
                   help="number of state samples (data length N)")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("analyze", help="certify an H2 bound from a dataset")
    p.add_argument("dataset", type=Path, help="dataset CSV")
    _add_common(p)
    p.add_argument("--g", choices=G_CHOICES, default=None,
                   help="right-inverse choice")
    p.add_argument("--no-reduce", action="store_true",
                   help="disable the uncertainty column reduction")
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("truth-h2", help="H2 norm of a known system")
    p.add_argument("system", help='system JSON file or "paper-example"')
    p.set_defaults(func=_cmd_truth_h2)

    p = sub.add_parser("montecarlo", help="run the Monte Carlo study")
    _add_common(p)
    p.add_argument("--g", choices=G_CHOICES, default=None,
                   help="restrict to one right-inverse choice")
    p.add_argument("--no-reduce", action="store_true",
                   help="disable the uncertainty column reduction")
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel worker processes")
    p.set_defaults(func=_cmd_montecarlo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except EivError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
