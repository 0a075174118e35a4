"""Evaluation engine: error decompositions, subgroup reports, diagnostics.

Table-level reports decompose per-unit estimation error into absolute
mean error ("bias"), population variance, and mean squared error, which
satisfy mse = bias**2 + variance by construction. The subgroup report
slices truth and estimates by minority x female x income half (realized
sample median split) and keeps signed biases per cell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.stats

from .data import CateEstimates, Dataset, write_csv

#: Two-sided 95% normal critical value used for interval coverage.
Z_95 = 1.959964

#: Overlap band: propensities outside [eps, 1 - eps] count as violations.
OVERLAP_EPSILON = 0.05


@dataclass(frozen=True)
class MethodReport:
    """Error decomposition of one method's estimates against the truth."""

    method: str
    bias: float
    variance: float
    mse: float

    def __post_init__(self):
        for name in ("bias", "variance", "mse"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0.0:
                raise ValueError(f"{name} must be finite and nonnegative, got {value}")
        if abs(self.mse - (self.bias**2 + self.variance)) > 1e-8 + 1e-6 * self.mse:
            raise ValueError(
                "mse must equal bias^2 + variance within tolerance; got "
                f"mse={self.mse}, bias={self.bias}, variance={self.variance}"
            )


def bias_variance_mse(estimates: CateEstimates, truth: np.ndarray) -> MethodReport:
    """Decompose estimation error: |mean error|, population variance, MSE."""
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != estimates.tau_hat.shape:
        raise ValueError(
            f"estimates ({estimates.tau_hat.shape}) and truth ({truth.shape}) differ in length"
        )
    if truth.size < 2:
        raise ValueError("need at least 2 units")
    errors = estimates.tau_hat - truth
    return MethodReport(
        method=estimates.method,
        bias=float(abs(errors.mean())),
        variance=float(errors.var()),  # population (1/n) variance
        mse=float(np.mean(errors**2)),
    )


# ---------------------------------------------------------------------------
# Subgroup report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SubgroupRow:
    minority: int
    female: int
    income_half: str  # "high" or "low" relative to the sample median
    n: int
    true_mean: float
    means: Mapping[str, float]
    biases: Mapping[str, float]

    @property
    def label(self) -> str:
        return f"minority={self.minority},female={self.female},income={self.income_half}"


@dataclass(frozen=True)
class SubgroupReport:
    rows: tuple[SubgroupRow, ...]
    mean_absolute_bias: Mapping[str, float]
    methods: tuple[str, ...]


def subgroup_report(
    dataset: Dataset,
    tau_true: np.ndarray,
    estimates: Sequence[CateEstimates],
) -> SubgroupReport:
    """Eight-cell report over minority x female x income-half subgroups.

    Cell biases stay signed; the footer aggregates each method to the
    mean over cells of the absolute bias.
    """
    tau_true = np.asarray(tau_true, dtype=np.float64)
    if tau_true.shape != (dataset.n,):
        raise ValueError("tau_true must have one entry per unit")
    for est in estimates:
        if est.n != dataset.n:
            raise ValueError(f"method {est.method!r} has {est.n} estimates for {dataset.n} units")

    income = dataset.column("income")
    minority = dataset.column("minority")
    female = dataset.column("female")
    high_income = income > np.median(income)

    rows = []
    for m_val in (1, 0):
        for f_val in (1, 0):
            for half, half_mask in (("high", high_income), ("low", ~high_income)):
                mask = (minority == m_val) & (female == f_val) & half_mask
                label = f"minority={m_val},female={f_val},income={half}"
                if not mask.any():
                    raise ValueError(f"empty subgroup: {label}")
                true_mean = float(tau_true[mask].mean())
                means = {est.method: float(est.tau_hat[mask].mean()) for est in estimates}
                biases = {method: mean - true_mean for method, mean in means.items()}
                rows.append(
                    SubgroupRow(
                        minority=m_val,
                        female=f_val,
                        income_half=half,
                        n=int(mask.sum()),
                        true_mean=true_mean,
                        means=means,
                        biases=biases,
                    )
                )
    methods = tuple(est.method for est in estimates)
    mab = {
        method: float(np.mean([abs(row.biases[method]) for row in rows])) for method in methods
    }
    return SubgroupReport(rows=tuple(rows), mean_absolute_bias=mab, methods=methods)


# ---------------------------------------------------------------------------
# Interval coverage and overlap diagnostics
# ---------------------------------------------------------------------------


def coverage(estimates: CateEstimates, truth: np.ndarray, level: float = 0.95) -> float:
    """Fraction of units whose truth lands inside the normal interval
    tau_hat +/- z * se."""
    if estimates.se is None:
        raise ValueError(f"method {estimates.method!r} carries no standard errors")
    truth = np.asarray(truth, dtype=np.float64)
    if truth.shape != estimates.tau_hat.shape:
        raise ValueError("estimates and truth differ in length")
    if not 0.0 < level < 1.0:
        raise ValueError("level must be in (0, 1)")
    z = Z_95 if level == 0.95 else float(scipy.stats.norm.ppf(0.5 + level / 2.0))
    half_width = z * estimates.se
    inside = np.abs(truth - estimates.tau_hat) <= half_width
    return float(inside.mean())


@dataclass(frozen=True)
class OverlapDiagnostic:
    minimum: float
    maximum: float
    violations: int
    n: int
    epsilon: float


def overlap_check(propensities: np.ndarray, epsilon: float = OVERLAP_EPSILON) -> OverlapDiagnostic:
    """Count propensities outside [epsilon, 1 - epsilon]."""
    values = np.asarray(propensities, dtype=np.float64)
    if not np.isfinite(values).all():
        raise ValueError("propensities contain non-finite values")
    outside = (values < epsilon) | (values > 1.0 - epsilon)
    return OverlapDiagnostic(
        minimum=float(values.min()),
        maximum=float(values.max()),
        violations=int(outside.sum()),
        n=int(values.size),
        epsilon=epsilon,
    )


# ---------------------------------------------------------------------------
# Table and figure-data emission
# ---------------------------------------------------------------------------


def write_method_reports_csv(path, entries: Sequence[tuple[str, MethodReport]]) -> None:
    """Rows of (scenario, method) -> bias, variance, mse."""
    write_csv(
        path,
        ["scenario", "method", "bias", "variance", "mse"],
        ([scenario, rep.method, rep.bias, rep.variance, rep.mse] for scenario, rep in entries),
    )


def _write_markdown(path, header: Sequence[str], rows: Sequence[Sequence[str]]) -> None:
    cells = [list(header)] + [list(r) for r in rows]
    widths = [max(len(row[j]) for row in cells) for j in range(len(header))]

    def render(row):
        return "| " + " | ".join(cell.ljust(widths[j]) for j, cell in enumerate(row)) + " |"

    lines = [render(cells[0]), "| " + " | ".join("-" * w for w in widths) + " |"]
    lines.extend(render(row) for row in cells[1:])
    from .data import atomic_write

    with atomic_write(path) as handle:
        handle.write("\n".join(lines) + "\n")


def write_method_reports_markdown(path, entries: Sequence[tuple[str, MethodReport]]) -> None:
    rows = [
        [scenario, rep.method, f"{rep.bias:.4f}", f"{rep.variance:.4f}", f"{rep.mse:.4f}"]
        for scenario, rep in entries
    ]
    _write_markdown(path, ["scenario", "method", "bias", "variance", "mse"], rows)


def _subgroup_header(report: SubgroupReport) -> list[str]:
    header = ["subgroup", "n", "true_mean"]
    for method in report.methods:
        header.extend([f"{method}_mean", f"{method}_bias"])
    return header


def write_subgroups_csv(path, report: SubgroupReport) -> None:
    """Eight labeled rows plus a mean-absolute-bias footer per method."""

    def rows():
        for row in report.rows:
            record = [row.label, row.n, row.true_mean]
            for method in report.methods:
                record.extend([row.means[method], row.biases[method]])
            yield record
        footer = ["mean_absolute_bias", "", ""]
        for method in report.methods:
            footer.extend(["", report.mean_absolute_bias[method]])
        yield footer

    write_csv(path, _subgroup_header(report), rows())


def write_subgroups_markdown(path, report: SubgroupReport) -> None:
    rows = []
    for row in report.rows:
        record = [row.label, str(row.n), f"{row.true_mean:.4f}"]
        for method in report.methods:
            record.extend([f"{row.means[method]:.4f}", f"{row.biases[method]:+.4f}"])
        rows.append(record)
    footer = ["mean_absolute_bias", "", ""]
    for method in report.methods:
        footer.extend(["", f"{report.mean_absolute_bias[method]:.4f}"])
    rows.append(footer)
    _write_markdown(path, _subgroup_header(report), rows)


def write_scatter_csv(path, tau_true: np.ndarray, estimates: CateEstimates) -> None:
    """Estimate-versus-truth scatter data, one row per unit."""
    tau_true = np.asarray(tau_true, dtype=np.float64)
    if tau_true.shape != estimates.tau_hat.shape:
        raise ValueError("tau_true and estimates differ in length")
    write_csv(
        path,
        ["unit_id", "tau_true", "tau_hat"],
        ([i, tau_true[i], estimates.tau_hat[i]] for i in range(tau_true.size)),
    )


def write_importance_csv(path, importance: Mapping[str, float]) -> None:
    write_csv(path, ["feature", "weight"], ([k, v] for k, v in importance.items()))


def emit_figure_data(
    out_dir,
    tau_true: np.ndarray,
    estimates: Sequence[CateEstimates],
    importance: Mapping[str, float] | None,
    report: SubgroupReport,
) -> list[str]:
    """Write plot-ready CSVs for one completed scenario run.

    Emits one estimate-vs-truth scatter file per method, the variable
    importance bars (when a forest ran), and the subgroup true-vs-
    estimated means. Returns the written paths.
    """
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []
    for est in estimates:
        path = os.path.join(out_dir, f"scatter_{est.method}.csv")
        write_scatter_csv(path, tau_true, est)
        written.append(path)
    if importance is not None:
        path = os.path.join(out_dir, "importance.csv")
        write_importance_csv(path, importance)
        written.append(path)
    path = os.path.join(out_dir, "subgroups.csv")
    write_subgroups_csv(path, report)
    written.append(path)
    return written
