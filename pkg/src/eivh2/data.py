"""Trajectory containers, noise bookkeeping, and dataset persistence.

The dataset CSV has header ``k,x1..xn,wp1..wpm,zp1..zpp`` and one row per
time step; input/output fields are empty on the final state-only row.  An
optional ``<name>.truth.json`` sidecar carries the generating system and the
retained noise realization for oracle tests.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import DataFormatError
from .lti import LtiSystem


@dataclass(frozen=True)
class NoiseBounds:
    """Known bounds: per-instant ball radii for states / outputs, and the
    amplitude of the constant process disturbance."""

    v_x: float
    v_zp: float
    d_bar: float

    def __post_init__(self):
        if min(self.v_x, self.v_zp, self.d_bar) < 0:
            raise ValueError("noise bounds must be nonnegative")


@dataclass(frozen=True)
class CleanTrajectory:
    """Exact simulation output: states x_0..x_{N-1}, inputs/outputs up to
    N-2, and the constant disturbance value."""

    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    disturbance: float

    def __post_init__(self):
        for name in ("states", "inputs", "outputs"):
            object.__setattr__(self, name,
                               np.atleast_2d(np.asarray(getattr(self, name),
                                                        dtype=float)))
        N = self.states.shape[1]
        if self.inputs.shape[1] != N - 1 or self.outputs.shape[1] != N - 1:
            raise ValueError("inputs/outputs must have one column less than states")

    @property
    def n_samples(self) -> int:
        return self.states.shape[1]


@dataclass(frozen=True)
class NoiseRecord:
    """Retained noise realization (for oracle tests, never for analysis)."""

    V_X: np.ndarray
    V_Xp: np.ndarray
    V_Zp: np.ndarray
    d: float


@dataclass(frozen=True)
class NoisyDataset:
    """Measured trajectory data; ``noise`` is None when ground truth is
    unavailable (e.g. data read from a file without sidecar)."""

    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    noise: NoiseRecord | None = None

    def __post_init__(self):
        for name in ("states", "inputs", "outputs"):
            object.__setattr__(self, name,
                               np.atleast_2d(np.asarray(getattr(self, name),
                                                        dtype=float)))
        N = self.states.shape[1]
        if self.inputs.shape[1] != N - 1 or self.outputs.shape[1] != N - 1:
            raise ValueError("inputs/outputs must have one column less than states")

    @property
    def n_samples(self) -> int:
        return self.states.shape[1]

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @property
    def m_p(self) -> int:
        return self.inputs.shape[0]

    @property
    def p_p(self) -> int:
        return self.outputs.shape[0]


# ---------------------------------------------------------------------------
# JSON helpers (row-major matrices with explicit dimensions)
# ---------------------------------------------------------------------------

def matrix_to_json(M: np.ndarray) -> dict:
    M = np.atleast_2d(np.asarray(M, dtype=float))
    return {"shape": list(M.shape), "data": M.ravel(order="C").tolist()}


def matrix_from_json(obj) -> np.ndarray:
    shape = tuple(obj["shape"])
    data = np.asarray(obj["data"], dtype=float)
    if data.size != shape[0] * shape[1]:
        raise DataFormatError(
            f"matrix payload has {data.size} entries, expected {shape[0] * shape[1]}")
    return data.reshape(shape, order="C")


def system_to_json(sys: LtiSystem) -> dict:
    return {name: matrix_to_json(getattr(sys, name))
            for name in ("A", "Bp", "Bd", "Cp", "Dp")}


def system_from_json(obj) -> LtiSystem:
    return LtiSystem(**{name: matrix_from_json(obj[name])
                        for name in ("A", "Bp", "Bd", "Cp", "Dp")})


def read_system(path) -> LtiSystem:
    """Load a system description JSON file."""
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataFormatError(f"{path}: invalid JSON ({exc})", line=exc.lineno)
    try:
        return system_from_json(obj)
    except KeyError as exc:
        raise DataFormatError(f"{path}: missing system matrix {exc}")


def write_system(sys: LtiSystem, path) -> None:
    with open(path, "w") as fh:
        json.dump(system_to_json(sys), fh, indent=1)


# ---------------------------------------------------------------------------
# Dataset CSV + sidecar
# ---------------------------------------------------------------------------

def _sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".truth.json")


def write_dataset(ds: NoisyDataset, path, system: LtiSystem | None = None,
                  include_truth: bool = True) -> None:
    """Write the measured data as CSV; optionally a ground-truth sidecar.

    The sidecar is written only when ``include_truth`` and there is something
    to record (a noise realization and/or the generating system).
    """
    path = Path(path)
    n, m, p = ds.n, ds.m_p, ds.p_p
    N = ds.n_samples
    header = (["k"] + [f"x{i + 1}" for i in range(n)]
              + [f"wp{i + 1}" for i in range(m)]
              + [f"zp{i + 1}" for i in range(p)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(N):
            row = [str(k)] + [repr(float(v)) for v in ds.states[:, k]]
            if k < N - 1:
                row += [repr(float(v)) for v in ds.inputs[:, k]]
                row += [repr(float(v)) for v in ds.outputs[:, k]]
            else:
                row += [""] * (m + p)
            writer.writerow(row)
    if include_truth and (ds.noise is not None or system is not None):
        payload: dict = {}
        if system is not None:
            payload["system"] = system_to_json(system)
        if ds.noise is not None:
            payload["noise"] = {
                "V_X": matrix_to_json(ds.noise.V_X),
                "V_Xp": matrix_to_json(ds.noise.V_Xp),
                "V_Zp": matrix_to_json(ds.noise.V_Zp),
                "d": float(ds.noise.d),
            }
        with open(_sidecar_path(path), "w") as fh:
            json.dump(payload, fh, indent=1)


def read_dataset(path) -> NoisyDataset:
    """Read a dataset CSV (and its ``.truth.json`` sidecar when present)."""
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file", line=1)
        n = sum(1 for h in header if h.startswith("x"))
        m = sum(1 for h in header if h.startswith("wp"))
        p = sum(1 for h in header if h.startswith("zp"))
        if not header or header[0] != "k" or n == 0 or len(header) != 1 + n + m + p:
            raise DataFormatError(f"{path}: unrecognized header {header!r}", line=1)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise DataFormatError(
                    f"{path}: expected {len(header)} fields, got {len(row)}",
                    line=lineno)
            try:
                state = [float(v) for v in row[1:1 + n]]
                rest = row[1 + n:]
                has_io = any(v != "" for v in rest)
                io = [float(v) for v in rest] if has_io else None
            except ValueError as exc:
                raise DataFormatError(f"{path}: {exc}", line=lineno)
            rows.append((state, io))
    if len(rows) < 2:
        raise DataFormatError(f"{path}: need at least two time steps")
    if rows[-1][1] is not None:
        raise DataFormatError(
            f"{path}: final row must leave inputs/outputs empty",
            line=len(rows) + 1)
    for idx, (_, io) in enumerate(rows[:-1]):
        if io is None:
            raise DataFormatError(
                f"{path}: missing inputs/outputs before the final row",
                line=idx + 2)
    states = np.array([s for s, _ in rows]).T
    ios = np.array([io for _, io in rows[:-1]]).T
    inputs, outputs = ios[:m], ios[m:]

    noise = None
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        with open(sidecar) as fh:
            payload = json.load(fh)
        if "noise" in payload:
            nz = payload["noise"]
            noise = NoiseRecord(V_X=matrix_from_json(nz["V_X"]),
                                V_Xp=matrix_from_json(nz["V_Xp"]),
                                V_Zp=matrix_from_json(nz["V_Zp"]),
                                d=float(nz["d"]))
    return NoisyDataset(states=states, inputs=inputs, outputs=outputs,
                        noise=noise)


def read_sidecar_system(path) -> LtiSystem | None:
    """The generating system recorded next to a dataset, if any."""
    sidecar = _sidecar_path(path)
    if not sidecar.exists():
        return None
    with open(sidecar) as fh:
        payload = json.load(fh)
    if "system" not in payload:
        return None
    return system_from_json(payload["system"])
