"""Monte Carlo harness: sweeps data lengths, compares right inverses,
aggregates feasibility rates and relative bound errors, and emits
plot-ready CSV files.

Every run is seeded independently from ``(master_seed, N, repetition,
G choice)`` so cells can be re-run in isolation and executed on a worker
pool without affecting results.
"""

from __future__ import annotations

import csv
import json
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import (MultiplierFamily, assemble_analysis_lft,
                       assemble_h2_sdp, build_analysis_regression,
                       solve_h2_bound, verify_certificate,
                       weighted_right_inverse)
from .data import NoiseBounds, read_system
from .exceptions import DataFormatError, RankDeficientError
from .lti import LtiSystem, true_h2
from .regression import right_inverse_moore_penrose
from .sdp import NUMERICAL_FAILURE, OPTIMAL
from .simulate import corrupt, example_system, simulate

G_CHOICES = ("moore_penrose", "weighted")
ASSUMPTION_FAILED = "assumption_failed"

DEFAULT_N_LIST = (7, 25, 50, 100, 200, 300)
DEFAULT_BOUNDS = NoiseBounds(v_x=5e-4, v_zp=5e-4, d_bar=0.01)


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to reproduce a Monte Carlo study."""

    system: str = "paper-example"
    bounds: NoiseBounds = DEFAULT_BOUNDS
    n_list: tuple[int, ...] = DEFAULT_N_LIST
    repetitions: int = 100
    g_choice: str | None = None   # None: both inverses in the sweep
    reduce: bool = True
    eps: float = 1e-7
    solver_tol: float = 1e-8
    master_seed: int = 0
    verify_samples: int = 8

    def __post_init__(self):
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")
        if self.g_choice is not None and self.g_choice not in G_CHOICES:
            raise ValueError(f"g_choice must be one of {G_CHOICES}")
        object.__setattr__(self, "n_list", tuple(int(N) for N in self.n_list))

    def to_json_dict(self) -> dict:
        return {
            "system": self.system,
            "bounds": {"v_x": self.bounds.v_x, "v_zp": self.bounds.v_zp,
                       "d_bar": self.bounds.d_bar},
            "n_list": list(self.n_list),
            "repetitions": self.repetitions,
            "g_choice": self.g_choice,
            "reduce": self.reduce,
            "eps": self.eps,
            "solver_tol": self.solver_tol,
            "master_seed": self.master_seed,
            "verify_samples": self.verify_samples,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "ExperimentConfig":
        kwargs = dict(obj)
        if "bounds" in kwargs:
            kwargs["bounds"] = NoiseBounds(**kwargs["bounds"])
        if "n_list" in kwargs:
            kwargs["n_list"] = tuple(kwargs["n_list"])
        unknown = set(kwargs) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise DataFormatError(f"unknown config fields: {sorted(unknown)}")
        return cls(**kwargs)


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc})", line=exc.lineno)
    return ExperimentConfig.from_json_dict(obj)


def load_system(source) -> LtiSystem:
    if isinstance(source, LtiSystem):
        return source
    if source == "paper-example":
        return example_system()
    return read_system(source)


@dataclass(frozen=True)
class RunRecord:
    """Outcome of one (N, repetition, G choice) cell."""

    N: int
    rep: int
    seed: int
    g_choice: str
    status: str
    gamma: float | None
    gamma_true: float
    eps_g: float | None
    solve_time_s: float


@dataclass(frozen=True)
class SummaryRow:
    N: int
    g_choice: str
    feasibility_rate: float
    mean_eps_g: float | None
    median_eps_g: float | None
    n_feasible: int
    n_runs: int


@dataclass(frozen=True)
class SummaryTable:
    rows: tuple[SummaryRow, ...]

    def row(self, N: int, g_choice: str) -> SummaryRow:
        for r in self.rows:
            if r.N == N and r.g_choice == g_choice:
                return r
        raise KeyError((N, g_choice))


def derive_run_seed(master_seed: int, N: int, rep: int, g_choice: str) -> int:
    """Stable per-cell seed, independent across cells."""
    g_idx = G_CHOICES.index(g_choice)
    ss = np.random.SeedSequence(entropy=[int(master_seed), int(N), int(rep),
                                         g_idx])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_single(config: ExperimentConfig, N: int, rep_index: int,
               g_choice: str | None = None) -> RunRecord:
    """Simulate, corrupt, assemble, solve, and verify one experiment cell.

    All failure modes land in the status field; optimal certificates that
    fail plug-back verification are downgraded to ``numerical_failure``.
    """
    g = g_choice or config.g_choice or "weighted"
    seed = derive_run_seed(config.master_seed, N, rep_index, g)
    system = load_system(config.system)
    gamma_true = true_h2(system)
    rng = np.random.default_rng(seed)

    x0 = rng.uniform(-1.0, 1.0, size=system.n)
    wp = rng.uniform(-1.0, 1.0, size=(system.m_p, N - 1))
    d = rng.uniform(-config.bounds.d_bar, config.bounds.d_bar) if system.m_d else 0.0
    dataset = corrupt(simulate(system, x0, wp, d), config.bounds, rng)

    def record(status, gamma=None, solve_time=0.0):
        eps_g = (abs(gamma - gamma_true) / gamma_true
                 if status == OPTIMAL and gamma is not None else None)
        return RunRecord(N=N, rep=rep_index, seed=seed, g_choice=g,
                         status=status, gamma=gamma, gamma_true=gamma_true,
                         eps_g=eps_g, solve_time_s=solve_time)

    try:
        reg, uset = build_analysis_regression(dataset, system.Bd, config.bounds)
        if g == "weighted":
            try:
                G = weighted_right_inverse(reg, uset)
            except ValueError:
                # degenerate weight (all-zero bounds): fall back to G-dagger
                G = right_inverse_moore_penrose(reg.X)
        else:
            G = right_inverse_moore_penrose(reg.X)
    except RankDeficientError:
        return record(ASSUMPTION_FAILED)

    try:
        lft = assemble_analysis_lft(reg, uset, G, reduce=config.reduce)
        problem = assemble_h2_sdp(lft, MultiplierFamily(lft.uncertainty),
                                  eps=config.eps)
        cert = solve_h2_bound(problem, tol=config.solver_tol, eps=config.eps)
    except (ValueError, ArithmeticError, np.linalg.LinAlgError):
        return record(NUMERICAL_FAILURE)
    if cert.status != OPTIMAL:
        return record(cert.status, solve_time=cert.solve_time)
    if config.verify_samples > 0:
        report = verify_certificate(lft, cert, n_samples=config.verify_samples,
                                    seed=seed)
        if not report.ok:
            return record(NUMERICAL_FAILURE, solve_time=cert.solve_time)
    return record(OPTIMAL, gamma=cert.gamma, solve_time=cert.solve_time)


def _run_cell(args) -> RunRecord:
    config, N, rep, g = args
    return run_single(config, N, rep, g)


def summarize(records) -> SummaryTable:
    """Aggregate per (N, G choice); order is deterministic regardless of the
    order in which records were produced."""
    cells: dict[tuple[int, str], list[RunRecord]] = {}
    for rec in records:
        cells.setdefault((rec.N, rec.g_choice), []).append(rec)
    rows = []
    for (N, g) in sorted(cells):
        runs = cells[(N, g)]
        feasible = [r.eps_g for r in runs if r.status == OPTIMAL]
        rows.append(SummaryRow(
            N=N, g_choice=g,
            feasibility_rate=len(feasible) / len(runs),
            mean_eps_g=statistics.fmean(feasible) if feasible else None,
            median_eps_g=statistics.median(feasible) if feasible else None,
            n_feasible=len(feasible),
            n_runs=len(runs)))
    return SummaryTable(rows=tuple(rows))


def run_montecarlo(config: ExperimentConfig, jobs: int = 1):
    """Execute every (N, repetition, G choice) cell and aggregate.

    Returns ``(records, summary)``.  Cells are independent; with ``jobs > 1``
    they run on a process pool, and the deterministic per-cell seeds keep the
    output identical to a serial run.
    """
    system = load_system(config.system)
    n_min = system.n + system.m_p + 1
    too_short = [N for N in config.n_list if N < n_min]
    if too_short:
        raise ValueError(f"data lengths {too_short} are below the minimum "
                         f"N = {n_min} for this system")
    g_choices = (config.g_choice,) if config.g_choice else G_CHOICES
    cells = [(config, N, rep, g)
             for N in config.n_list
             for rep in range(config.repetitions)
             for g in g_choices]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_cell, cells, chunksize=4))
    else:
        records = [_run_cell(cell) for cell in cells]
    return records, summarize(records)


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


RECORD_COLUMNS = ("N", "rep", "seed", "g_choice", "status", "gamma",
                  "gamma_true", "eps_g", "solve_time_s")
SUMMARY_COLUMNS = ("N", "g_choice", "feasibility_rate", "mean_eps_g",
                   "median_eps_g", "n_feasible")


def emit_csv(obj, path) -> None:
    """Write records (list of RunRecord) or a SummaryTable to CSV."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if isinstance(obj, SummaryTable):
            writer.writerow(SUMMARY_COLUMNS)
            for row in obj.rows:
                writer.writerow([_fmt(getattr(row, col)) for col in SUMMARY_COLUMNS])
        else:
            writer.writerow(RECORD_COLUMNS)
            for rec in obj:
                writer.writerow([_fmt(getattr(rec, col)) for col in RECORD_COLUMNS])


def read_records_csv(path) -> list[RunRecord]:
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != RECORD_COLUMNS:
            raise DataFormatError(f"{path}: unexpected columns "
                                  f"{reader.fieldnames}", line=1)
        for row in reader:
            records.append(RunRecord(
                N=int(row["N"]), rep=int(row["rep"]), seed=int(row["seed"]),
                g_choice=row["g_choice"], status=row["status"],
                gamma=float(row["gamma"]) if row["gamma"] else None,
                gamma_true=float(row["gamma_true"]),
                eps_g=float(row["eps_g"]) if row["eps_g"] else None,
                solve_time_s=float(row["solve_time_s"])))
    return records
