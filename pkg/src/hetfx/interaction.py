"""Ordinary least squares with treatment-by-covariate interaction terms.

The deductive baseline: the analyst chooses which covariates enter as
main effects and which ones interact with treatment, and per-unit
effect estimates fall out as fitted-value differences between the
treated and untreated versions of the same covariate record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg

from .data import CateEstimates, Dataset, write_csv

INTERCEPT_TERM = "intercept"
TREATMENT_TERM = "W"

#: Relative diagonal tolerance for declaring a design column dependent.
_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class DesignSpec:
    """Which covariates enter the regression, and which interact with treatment."""

    main_effects: tuple[str, ...]
    treatment_interactions: tuple[str, ...]
    include_intercept: bool = True

    def __post_init__(self):
        object.__setattr__(self, "main_effects", tuple(self.main_effects))
        object.__setattr__(self, "treatment_interactions", tuple(self.treatment_interactions))
        if len(set(self.main_effects)) != len(self.main_effects):
            raise ValueError("duplicate names in main_effects")
        if len(set(self.treatment_interactions)) != len(self.treatment_interactions):
            raise ValueError("duplicate names in treatment_interactions")
        extra = set(self.treatment_interactions) - set(self.main_effects)
        if extra:
            raise ValueError(
                f"treatment interactions must be a subset of main effects; extra: {sorted(extra)}"
            )

    def term_names(self) -> list[str]:
        """Design column names in fitting order."""
        names = [INTERCEPT_TERM] if self.include_intercept else []
        names.extend(self.main_effects)
        names.append(TREATMENT_TERM)
        names.extend(f"{TREATMENT_TERM}:{name}" for name in self.treatment_interactions)
        return names

    def to_json(self) -> str:
        return json.dumps(
            {
                "main_effects": list(self.main_effects),
                "treatment_interactions": list(self.treatment_interactions),
                "include_intercept": self.include_intercept,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DesignSpec":
        payload = json.loads(text)
        return cls(
            tuple(payload["main_effects"]),
            tuple(payload["treatment_interactions"]),
            bool(payload.get("include_intercept", True)),
        )


def saturated_design(feature_names: Sequence[str]) -> DesignSpec:
    """All main effects and all treatment-by-covariate products."""
    return DesignSpec(tuple(feature_names), tuple(feature_names), include_intercept=True)


@dataclass(frozen=True)
class LinearModel:
    """A fitted interaction regression: named coefficients plus residual variance."""

    design: DesignSpec
    terms: tuple[str, ...]
    coefficients: np.ndarray
    residual_variance: float

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=np.float64)
        object.__setattr__(self, "coefficients", coef)
        object.__setattr__(self, "terms", tuple(self.terms))
        if coef.shape != (len(self.terms),):
            raise ValueError("coefficient count must match the term list")
        if not np.isfinite(coef).all():
            raise ValueError("coefficients contain non-finite values")
        if self.residual_variance < 0.0:
            raise ValueError("residual_variance must be nonnegative")

    def coefficient(self, term: str) -> float:
        try:
            return float(self.coefficients[self.terms.index(term)])
        except ValueError:
            raise KeyError(f"no term {term!r}; model terms: {list(self.terms)}")

    def write_coefficients_csv(self, path) -> None:
        write_csv(path, ["term", "value"], zip(self.terms, self.coefficients))


def build_design(dataset: Dataset, spec: DesignSpec) -> np.ndarray:
    """Assemble the regression matrix in the spec's fixed column order:
    [intercept?, main effects..., W, W x interactions...]."""
    unknown = [
        name
        for name in (*spec.main_effects, *spec.treatment_interactions)
        if name not in dataset.feature_names
    ]
    if unknown:
        raise ValueError(f"design references unknown covariates {unknown}")
    columns = []
    if spec.include_intercept:
        columns.append(np.ones(dataset.n))
    for name in spec.main_effects:
        columns.append(dataset.column(name))
    columns.append(dataset.treatment)
    for name in spec.treatment_interactions:
        columns.append(dataset.treatment * dataset.column(name))
    return np.column_stack(columns)


def fit_ols(design: np.ndarray, y: np.ndarray, spec: DesignSpec) -> LinearModel:
    """Least squares via column-pivoted Householder QR.

    Raises on rank deficiency, naming the dependent column(s), rather
    than silently regularizing; an orthogonal decomposition keeps the
    solve stable on near-collinear designs.
    """
    design = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    terms = spec.term_names()
    if design.ndim != 2 or design.shape[1] != len(terms):
        raise ValueError(f"design must have {len(terms)} columns, got shape {design.shape}")
    n, k = design.shape
    if y.shape != (n,):
        raise ValueError(f"y has shape {y.shape}, expected ({n},)")
    if n < k:
        raise ValueError(f"need at least as many rows as columns: {n} rows, {k} columns")

    q, r, pivots = scipy.linalg.qr(design, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = _RANK_RTOL * max(np.linalg.norm(design, axis=0).max(), 1e-300)
    rank = int(np.sum(diag > tol))
    if rank < k:
        dependent = sorted(terms[j] for j in pivots[rank:])
        raise ValueError(
            f"design matrix is rank deficient (rank {rank} of {k}); "
            f"dependent column(s): {dependent}"
        )
    beta_pivoted = scipy.linalg.solve_triangular(r, q.T @ y)
    beta = np.empty(k)
    beta[pivots] = beta_pivoted

    residuals = y - design @ beta
    dof = n - k
    residual_variance = float(residuals @ residuals / dof) if dof > 0 else 0.0
    return LinearModel(spec, tuple(terms), beta, residual_variance)


def fit_interaction_model(dataset: Dataset, spec: DesignSpec | None = None) -> LinearModel:
    """Build the design for a dataset and fit it in one step."""
    if spec is None:
        spec = saturated_design(dataset.feature_names)
    return fit_ols(build_design(dataset, spec), dataset.outcome, spec)


def predict_cate(model: LinearModel, row: Mapping[str, float]) -> float:
    """Fitted-value difference between treated and untreated at one record:
    the treatment coefficient plus interaction contributions."""
    missing = [name for name in model.design.treatment_interactions if name not in row]
    if missing:
        raise ValueError(f"covariate record missing {missing}")
    value = model.coefficient(TREATMENT_TERM)
    for name in model.design.treatment_interactions:
        value += model.coefficient(f"{TREATMENT_TERM}:{name}") * float(row[name])
    return value


def estimate_cate(
    dataset: Dataset, spec: DesignSpec | None = None, method: str = "ols"
) -> CateEstimates:
    """Fit the interaction regression and return per-unit effect estimates."""
    if spec is None:
        spec = saturated_design(dataset.feature_names)
    model = fit_interaction_model(dataset, spec)
    tau = np.full(dataset.n, model.coefficient(TREATMENT_TERM))
    for name in model.design.treatment_interactions:
        tau = tau + model.coefficient(f"{TREATMENT_TERM}:{name}") * dataset.column(name)
    return CateEstimates(method=method, tau_hat=tau)
