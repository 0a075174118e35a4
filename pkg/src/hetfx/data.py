"""Shared data containers and delimited-file round trips.

All CSV writers format floats with ``repr`` (shortest round-trip
representation) and write through a temp file + atomic rename, so a
rerun with the same inputs produces byte-identical files and an
interrupted run never leaves a truncated table behind.
"""

from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence

import numpy as np

SCENARIO_FEATURES = ("income", "test_score", "neighborhood", "minority", "female")
TREATMENT_COLUMN = "W"
OUTCOME_COLUMN = "Y"

GROUND_TRUTH_COLUMNS = ("tau_true", "ite_true", "y0", "y1", "u", "propensity")


def _as_float_vector(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Observed units: a named covariate matrix, a binary treatment, an outcome.

    Parameters
    ----------
    covariates : (n, p) float array
    feature_names : names for the covariate columns, length p
    treatment : (n,) array with values in {0, 1}
    outcome : (n,) real array
    """

    covariates: np.ndarray
    feature_names: tuple[str, ...]
    treatment: np.ndarray
    outcome: np.ndarray

    def __post_init__(self):
        cov = np.asarray(self.covariates, dtype=np.float64)
        if cov.ndim != 2:
            raise ValueError(f"covariates must be 2-d, got shape {cov.shape}")
        object.__setattr__(self, "covariates", cov)
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "treatment", _as_float_vector(self.treatment, "treatment"))
        object.__setattr__(self, "outcome", _as_float_vector(self.outcome, "outcome"))

        n, p = cov.shape
        if len(self.feature_names) != p:
            raise ValueError(
                f"{p} covariate columns but {len(self.feature_names)} feature names"
            )
        if len(set(self.feature_names)) != p:
            raise ValueError("feature names must be unique")
        if self.treatment.shape[0] != n or self.outcome.shape[0] != n:
            raise ValueError(
                "covariates, treatment and outcome must share the same length; got "
                f"{n}, {self.treatment.shape[0]}, {self.outcome.shape[0]}"
            )
        if not np.isfinite(cov).all():
            raise ValueError("covariates contain non-finite values")
        if not np.isfinite(self.outcome).all():
            raise ValueError("outcome contains non-finite values")
        if not np.isin(self.treatment, (0.0, 1.0)).all():
            bad = np.flatnonzero(~np.isin(self.treatment, (0.0, 1.0)))[:10]
            raise ValueError(
                f"treatment must be binary in {{0, 1}}; offending rows: {bad.tolist()}"
            )

    @property
    def n(self) -> int:
        return self.covariates.shape[0]

    @property
    def p(self) -> int:
        return self.covariates.shape[1]

    def column(self, name: str) -> np.ndarray:
        """Return one covariate column by name."""
        try:
            j = self.feature_names.index(name)
        except ValueError:
            raise KeyError(f"unknown covariate {name!r}; have {list(self.feature_names)}")
        return self.covariates[:, j]

    def row(self, i: int) -> dict[str, float]:
        """Covariate record for unit ``i`` as a name -> value mapping."""
        return {name: float(self.covariates[i, j]) for j, name in enumerate(self.feature_names)}


@dataclass(frozen=True)
class GroundTruth:
    """Simulation-only per-unit truths stored alongside a generated Dataset."""

    tau_true: np.ndarray
    ite_true: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    u: np.ndarray
    propensity: np.ndarray

    def __post_init__(self):
        for name in ("tau_true", "ite_true", "y0", "y1", "u", "propensity"):
            object.__setattr__(self, name, _as_float_vector(getattr(self, name), name))
        n = self.tau_true.shape[0]
        for name in ("ite_true", "y0", "y1", "u", "propensity"):
            if getattr(self, name).shape[0] != n:
                raise ValueError(f"{name} has length {getattr(self, name).shape[0]}, expected {n}")
        if np.any((self.propensity <= 0.0) | (self.propensity >= 1.0)):
            raise ValueError("propensity values must lie strictly inside (0, 1)")

    @property
    def n(self) -> int:
        return self.tau_true.shape[0]


@dataclass(frozen=True)
class CateEstimates:
    """Per-unit treatment effect estimates from one method."""

    method: str
    tau_hat: np.ndarray
    se: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "tau_hat", _as_float_vector(self.tau_hat, "tau_hat"))
        if self.se is not None:
            se = _as_float_vector(self.se, "se")
            if se.shape != self.tau_hat.shape:
                raise ValueError("se must align with tau_hat")
            if np.any(se < 0.0):
                raise ValueError("se must be nonnegative")
            object.__setattr__(self, "se", se)
        if not np.isfinite(self.tau_hat).all():
            raise ValueError(f"method {self.method!r} produced non-finite estimates")

    @property
    def n(self) -> int:
        return self.tau_hat.shape[0]


# ---------------------------------------------------------------------------
# Atomic file output
# ---------------------------------------------------------------------------


@contextmanager
def atomic_write(path: str | os.PathLike, mode: str = "w") -> Iterator:
    """Open a temp file in the target directory; rename over ``path`` on success."""
    path = os.fspath(path)
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode, newline="" if "b" not in mode else None) as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def fmt(value) -> str:
    """Shortest round-trip decimal form of a scalar."""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(path, header: Sequence[str], rows: Iterator[Sequence]) -> None:
    """Write a CSV with deterministic float formatting, atomically."""
    with atomic_write(path) as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([cell if isinstance(cell, str) else fmt(cell) for cell in row])


def write_json(path, payload) -> None:
    with atomic_write(path) as handle:
        json.dump(payload, handle, indent=2, sort_keys=True)
        handle.write("\n")


# ---------------------------------------------------------------------------
# Dataset / ground-truth CSV round trips
# ---------------------------------------------------------------------------


def write_dataset_csv(dataset: Dataset, path) -> None:
    """Export as CSV with columns <features...>, W, Y."""
    header = list(dataset.feature_names) + [TREATMENT_COLUMN, OUTCOME_COLUMN]

    def rows():
        for i in range(dataset.n):
            yield list(dataset.covariates[i]) + [dataset.treatment[i], dataset.outcome[i]]

    write_csv(path, header, rows())


def read_dataset_csv(
    path,
    treatment: str = TREATMENT_COLUMN,
    outcome: str = OUTCOME_COLUMN,
    covariates: Sequence[str] | None = None,
) -> Dataset:
    """Load a Dataset from a headed CSV.

    ``covariates`` selects covariate columns by name; by default every
    column other than the treatment and outcome is used, in file order.
    """
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file, expected a CSV header")
        records = list(reader)

    for required in (treatment, outcome):
        if required not in header:
            raise ValueError(f"{path}: missing required column {required!r}")
    if covariates is None:
        covariates = [c for c in header if c not in (treatment, outcome)]
    for name in covariates:
        if name not in header:
            raise ValueError(f"{path}: missing covariate column {name!r}")

    def parse(col: str) -> np.ndarray:
        j = header.index(col)
        try:
            return np.array([float(rec[j]) for rec in records], dtype=np.float64)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"{path}: non-numeric or missing value in column {col!r}: {exc}")

    w = parse(treatment)
    bad = np.flatnonzero(~np.isin(w, (0.0, 1.0)))
    if bad.size:
        listed = ", ".join(str(i + 2) for i in bad[:10])  # +2: header + 1-based
        raise ValueError(
            f"{path}: treatment column {treatment!r} is not binary; "
            f"offending file lines: {listed}"
        )
    cov = np.column_stack([parse(c) for c in covariates]) if covariates else np.empty((len(records), 0))
    return Dataset(cov, tuple(covariates), w, parse(outcome))


def write_ground_truth_csv(truth: GroundTruth, path) -> None:
    def rows():
        for i in range(truth.n):
            yield [getattr(truth, c)[i] for c in GROUND_TRUTH_COLUMNS]

    write_csv(path, GROUND_TRUTH_COLUMNS, rows())


def read_ground_truth_csv(path) -> GroundTruth:
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        if tuple(header) != GROUND_TRUTH_COLUMNS:
            raise ValueError(f"{path}: expected columns {GROUND_TRUTH_COLUMNS}, got {header}")
        cols = {name: [] for name in GROUND_TRUTH_COLUMNS}
        for rec in reader:
            for name, cell in zip(GROUND_TRUTH_COLUMNS, rec):
                cols[name].append(float(cell))
    return GroundTruth(**{name: np.array(vals) for name, vals in cols.items()})


def write_estimates_csv(estimates: CateEstimates, path) -> None:
    """Export per-unit estimates as CSV (unit_id, tau_hat[, se])."""
    if estimates.se is None:
        header = ["unit_id", "tau_hat"]
        rows = ([i, estimates.tau_hat[i]] for i in range(estimates.n))
    else:
        header = ["unit_id", "tau_hat", "se"]
        rows = ([i, estimates.tau_hat[i], estimates.se[i]] for i in range(estimates.n))
    write_csv(path, header, rows)
