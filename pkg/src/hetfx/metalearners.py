"""Meta-learners: reductions of effect estimation to standard regressions.

Five strategies over a pluggable regression oracle:

* S: one pooled model with treatment as a feature; effect = difference
  of predictions at treatment 1 vs 0.
* T: separate per-arm outcome models; effect = their difference.
* X: per-arm models impute unit-level effects, second-stage models fit
  the imputations, and the propensity blends the two fits.
* R: residual-on-residual regression; implemented as the exactly
  equivalent weighted regression of (Y - m) / (W - e) on covariates
  with weights (W - e)^2.
* DR: doubly robust per-unit scores regressed on covariates; the score
  mean doubles as the average-effect estimate.

Cross-fitting keeps every unit's nuisance predictions out-of-fold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .data import CateEstimates, Dataset
from .forest import (
    PROPENSITY_CLIP,
    RegressionForestParams,
    fit_regression_forest,
    predict_regression_forest,
)

#: Units with |W - e| below this are dropped from the R-learner regression.
R_LEARNER_RESIDUAL_FLOOR = 0.01


def _derive_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence(seed, spawn_key=path).generate_state(1, np.uint64)[0])


class FittedRegression(Protocol):
    def predict(self, x: np.ndarray) -> np.ndarray: ...


class RegressionOracle(Protocol):
    """Anything that can fit features -> target and predict on new rows."""

    def fit(
        self, x: np.ndarray, y: np.ndarray, sample_weight: np.ndarray | None = None, seed: int = 0
    ) -> FittedRegression: ...


@dataclass
class _FittedLinear:
    beta: np.ndarray
    include_intercept: bool

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.include_intercept:
            x = np.column_stack([np.ones(x.shape[0]), x])
        return x @ self.beta


@dataclass(frozen=True)
class LinearOracle:
    """Least squares with an optional ridge penalty (intercept unpenalized)."""

    ridge: float = 0.0
    include_intercept: bool = True

    def fit(self, x, y, sample_weight=None, seed: int = 0) -> _FittedLinear:
        x = np.asarray(x, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if self.ridge < 0.0:
            raise ValueError("ridge penalty must be nonnegative")
        design = np.column_stack([np.ones(x.shape[0]), x]) if self.include_intercept else x
        target = y
        if sample_weight is not None:
            root = np.sqrt(np.asarray(sample_weight, dtype=np.float64))
            design = design * root[:, None]
            target = target * root
        if self.ridge > 0.0:
            penalty = np.sqrt(self.ridge) * np.eye(design.shape[1])
            if self.include_intercept:
                penalty[0, 0] = 0.0
            design = np.vstack([design, penalty])
            target = np.concatenate([target, np.zeros(design.shape[1])])
        beta, *_ = np.linalg.lstsq(design, target, rcond=None)
        return _FittedLinear(beta, self.include_intercept)


@dataclass
class _FittedForest:
    model: object

    def predict(self, x: np.ndarray) -> np.ndarray:
        return predict_regression_forest(self.model, np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class ForestOracle:
    """Honest regression forest as a plug-in oracle."""

    num_trees: int = 200
    min_samples_leaf: int = 5
    subsample_fraction: float = 0.5
    honesty_fraction: float = 0.5
    mtry: int | None = None

    def fit(self, x, y, sample_weight=None, seed: int = 0) -> _FittedForest:
        params = RegressionForestParams(
            num_trees=self.num_trees,
            subsample_fraction=self.subsample_fraction,
            honesty_fraction=self.honesty_fraction,
            min_samples_leaf=self.min_samples_leaf,
            mtry=self.mtry,
            seed=seed,
        )
        return _FittedForest(fit_regression_forest(x, y, params, sample_weight=sample_weight))


# ---------------------------------------------------------------------------
# Cross-fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CrossFitPlan:
    """Fold assignment used for out-of-fold nuisance predictions."""

    k: int
    folds: np.ndarray
    seed: int

    def __post_init__(self):
        folds = np.asarray(self.folds, dtype=np.int64)
        object.__setattr__(self, "folds", folds)
        if self.k < 2:
            raise ValueError("need at least 2 folds")
        if set(np.unique(folds)) - set(range(self.k)):
            raise ValueError("fold labels must lie in [0, k)")

    @classmethod
    def build(cls, treatment: np.ndarray, k: int = 5, seed: int = 0) -> "CrossFitPlan":
        """Seeded fold assignment stratified by arm so that every fold
        contains treated and control units."""
        treatment = np.asarray(treatment, dtype=np.float64)
        treated = treatment == 1.0
        if min(int(treated.sum()), int((~treated).sum())) < k:
            raise ValueError(
                f"cannot stratify {k} folds: each arm needs at least {k} units"
            )
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(17,))))
        folds = np.empty(treatment.shape[0], dtype=np.int64)
        for mask in (treated, ~treated):
            shuffled = rng.permutation(np.flatnonzero(mask))
            folds[shuffled] = np.arange(shuffled.size) % k
        return cls(k=k, folds=folds, seed=seed)

    def validate_against(self, treatment: np.ndarray) -> None:
        treatment = np.asarray(treatment, dtype=np.float64)
        for fold in range(self.k):
            held = self.folds == fold
            if not held.any():
                raise ValueError(f"fold {fold} is empty")
            arm = treatment[held]
            if arm.all() or not arm.any():
                raise ValueError(f"fold {fold} does not contain both treatment arms")


def _crossfit(
    x: np.ndarray,
    target: np.ndarray,
    plan: CrossFitPlan,
    oracle: RegressionOracle,
    seed: int,
    stream: int,
    train_mask: np.ndarray | None = None,
) -> np.ndarray:
    """Out-of-fold predictions for every unit, optionally restricting the
    training rows (e.g. to one treatment arm)."""
    n = x.shape[0]
    out = np.empty(n)
    for fold in range(plan.k):
        held = plan.folds == fold
        train = ~held if train_mask is None else (~held & train_mask)
        if not train.any():
            raise ValueError(f"no training units left for fold {fold}")
        fitted = oracle.fit(x[train], target[train], seed=_derive_seed(seed, stream, fold))
        out[held] = fitted.predict(x[held])
    return out


def crossfit_outcome(dataset: Dataset, plan: CrossFitPlan, oracle: RegressionOracle, seed: int) -> np.ndarray:
    """Cross-fitted conditional outcome mean for every unit."""
    return _crossfit(dataset.covariates, dataset.outcome, plan, oracle, seed, stream=0)


def crossfit_propensity(dataset: Dataset, plan: CrossFitPlan, oracle: RegressionOracle, seed: int) -> np.ndarray:
    """Cross-fitted treatment probability, clipped to [0.05, 0.95]."""
    raw = _crossfit(dataset.covariates, dataset.treatment, plan, oracle, seed, stream=1)
    return np.clip(raw, *PROPENSITY_CLIP)


def crossfit_arm_outcomes(
    dataset: Dataset, plan: CrossFitPlan, oracle: RegressionOracle, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Cross-fitted control-arm and treated-arm outcome means (mu0, mu1)."""
    treated = dataset.treatment == 1.0
    mu0 = _crossfit(dataset.covariates, dataset.outcome, plan, oracle, seed, 2, train_mask=~treated)
    mu1 = _crossfit(dataset.covariates, dataset.outcome, plan, oracle, seed, 3, train_mask=treated)
    return mu0, mu1


# ---------------------------------------------------------------------------
# Learners
# ---------------------------------------------------------------------------


def _check_arms(dataset: Dataset, minimum: int = 1) -> tuple[np.ndarray, np.ndarray]:
    treated = dataset.treatment == 1.0
    n1, n0 = int(treated.sum()), int((~treated).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("both treatment arms must be nonempty")
    if min(n1, n0) < minimum:
        raise ValueError(f"each arm needs at least {minimum} units; have {n1} treated, {n0} control")
    return treated, ~treated


def s_learner(
    dataset: Dataset,
    oracle: RegressionOracle,
    seed: int = 0,
    treatment_interactions: tuple[str, ...] | None = None,
) -> CateEstimates:
    """Single pooled model with treatment as an ordinary feature.

    ``treatment_interactions`` optionally appends W * covariate product
    features, which lets a linear oracle express per-group effects.
    """
    _check_arms(dataset)
    interactions = tuple(treatment_interactions or ())
    for name in interactions:
        if name not in dataset.feature_names:
            raise ValueError(f"unknown interaction covariate {name!r}")

    def features(w: np.ndarray) -> np.ndarray:
        cols = [dataset.covariates, w[:, None]]
        cols.extend((w * dataset.column(name))[:, None] for name in interactions)
        return np.hstack(cols)

    try:
        fitted = oracle.fit(features(dataset.treatment), dataset.outcome, seed=seed)
        ones = np.ones(dataset.n)
        tau = fitted.predict(features(ones)) - fitted.predict(features(np.zeros(dataset.n)))
    except Exception as exc:
        raise RuntimeError(f"s_learner oracle failure: {exc}") from exc
    return CateEstimates(method="s", tau_hat=tau)


def t_learner(dataset: Dataset, oracle: RegressionOracle, seed: int = 0) -> CateEstimates:
    """Separate outcome models per arm; effect is their prediction gap."""
    treated, control = _check_arms(dataset, minimum=10)
    mu1 = oracle.fit(
        dataset.covariates[treated], dataset.outcome[treated], seed=_derive_seed(seed, 1)
    )
    mu0 = oracle.fit(
        dataset.covariates[control], dataset.outcome[control], seed=_derive_seed(seed, 0)
    )
    tau = mu1.predict(dataset.covariates) - mu0.predict(dataset.covariates)
    return CateEstimates(method="t", tau_hat=tau)


def x_learner(
    dataset: Dataset, oracle: RegressionOracle, e_hat: np.ndarray, seed: int = 0
) -> CateEstimates:
    """Impute per-unit effects from per-arm models, refit, and blend by propensity."""
    treated, control = _check_arms(dataset, minimum=10)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if e_hat.shape != (dataset.n,):
        raise ValueError("e_hat must have one entry per unit")
    if np.any((e_hat <= 0.0) | (e_hat >= 1.0)):
        raise ValueError("degenerate e_hat: values must lie strictly inside (0, 1)")

    mu1 = oracle.fit(
        dataset.covariates[treated], dataset.outcome[treated], seed=_derive_seed(seed, 1)
    )
    mu0 = oracle.fit(
        dataset.covariates[control], dataset.outcome[control], seed=_derive_seed(seed, 0)
    )
    imputed_treated = dataset.outcome[treated] - mu0.predict(dataset.covariates[treated])
    imputed_control = mu1.predict(dataset.covariates[control]) - dataset.outcome[control]
    tau1 = oracle.fit(dataset.covariates[treated], imputed_treated, seed=_derive_seed(seed, 3))
    tau0 = oracle.fit(dataset.covariates[control], imputed_control, seed=_derive_seed(seed, 2))
    tau = e_hat * tau0.predict(dataset.covariates) + (1.0 - e_hat) * tau1.predict(dataset.covariates)
    return CateEstimates(method="x", tau_hat=tau)


def r_learner(
    dataset: Dataset,
    m_hat: np.ndarray,
    e_hat: np.ndarray,
    tau_oracle: RegressionOracle,
    seed: int = 0,
) -> CateEstimates:
    """Minimize the residual-on-residual objective within the oracle's class.

    Equivalent weighted regression: pseudo-outcome (Y - m) / (W - e) on
    covariates with weights (W - e)^2, after dropping units whose
    treatment residual is inside the floor.
    """
    m_hat = np.asarray(m_hat, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    if m_hat.shape != (dataset.n,) or e_hat.shape != (dataset.n,):
        raise ValueError("m_hat and e_hat must have one entry per unit")
    resid_w = dataset.treatment - e_hat
    keep = np.abs(resid_w) >= R_LEARNER_RESIDUAL_FLOOR
    if not keep.any():
        raise ValueError(
            "every unit has |W - e_hat| below the residual floor; "
            "cannot run the residual-on-residual regression"
        )
    pseudo = (dataset.outcome[keep] - m_hat[keep]) / resid_w[keep]
    weights = resid_w[keep] ** 2
    fitted = tau_oracle.fit(
        dataset.covariates[keep], pseudo, sample_weight=weights, seed=_derive_seed(seed, 4)
    )
    return CateEstimates(method="r", tau_hat=fitted.predict(dataset.covariates))


@dataclass(frozen=True)
class DRResult:
    estimates: CateEstimates
    ate: float


def dr_learner(
    dataset: Dataset,
    m0_hat: np.ndarray,
    m1_hat: np.ndarray,
    e_hat: np.ndarray,
    tau_oracle: RegressionOracle,
    seed: int = 0,
) -> DRResult:
    """Regress doubly robust per-unit scores on covariates.

    The score mean is returned as the average-effect estimate: it stays
    consistent when either the outcome models or the propensity is right.
    """
    m0_hat = np.asarray(m0_hat, dtype=np.float64)
    m1_hat = np.asarray(m1_hat, dtype=np.float64)
    e_hat = np.asarray(e_hat, dtype=np.float64)
    for name, arr in (("m0_hat", m0_hat), ("m1_hat", m1_hat), ("e_hat", e_hat)):
        if arr.shape != (dataset.n,):
            raise ValueError(f"{name} must have one entry per unit")
    if np.any((e_hat <= 0.0) | (e_hat >= 1.0)):
        raise ValueError("e_hat must lie strictly inside (0, 1); clip it before calling")
    w = dataset.treatment
    y = dataset.outcome
    scores = (
        m1_hat
        - m0_hat
        + w * (y - m1_hat) / e_hat
        - (1.0 - w) * (y - m0_hat) / (1.0 - e_hat)
    )
    fitted = tau_oracle.fit(dataset.covariates, scores, seed=_derive_seed(seed, 5))
    estimates = CateEstimates(method="dr", tau_hat=fitted.predict(dataset.covariates))
    return DRResult(estimates=estimates, ate=float(scores.mean()))


def doubly_robust_scores(
    dataset: Dataset, m0_hat: np.ndarray, m1_hat: np.ndarray, e_hat: np.ndarray
) -> np.ndarray:
    """Per-unit doubly robust scores (exposed for diagnostics and tests)."""
    w = dataset.treatment
    y = dataset.outcome
    return (
        np.asarray(m1_hat, dtype=np.float64)
        - np.asarray(m0_hat, dtype=np.float64)
        + w * (y - m1_hat) / np.asarray(e_hat, dtype=np.float64)
        - (1.0 - w) * (y - m0_hat) / (1.0 - np.asarray(e_hat, dtype=np.float64))
    )


# ---------------------------------------------------------------------------
# One-call front end used by the CLI
# ---------------------------------------------------------------------------

METALEARNER_NAMES = ("s", "t", "x", "r", "dr")


def estimate_metalearner(
    method: str,
    dataset: Dataset,
    seed: int = 0,
    oracle: RegressionOracle | None = None,
    plan: CrossFitPlan | None = None,
) -> CateEstimates:
    """Run one meta-learner end to end, cross-fitting whatever it needs.

    The same plan (and therefore the same folds) can be shared across
    methods within a run for comparability.
    """
    if method not in METALEARNER_NAMES:
        raise ValueError(f"unknown meta-learner {method!r}; expected one of {METALEARNER_NAMES}")
    oracle = oracle if oracle is not None else ForestOracle()
    if method == "s":
        return s_learner(dataset, oracle, seed)
    if method == "t":
        return t_learner(dataset, oracle, seed)
    if plan is None:
        plan = CrossFitPlan.build(dataset.treatment, k=5, seed=seed)
    plan.validate_against(dataset.treatment)
    if method == "x":
        e_hat = crossfit_propensity(dataset, plan, oracle, seed)
        return x_learner(dataset, oracle, e_hat, seed)
    if method == "r":
        m_hat = crossfit_outcome(dataset, plan, oracle, seed)
        e_hat = crossfit_propensity(dataset, plan, oracle, seed)
        return r_learner(dataset, m_hat, e_hat, oracle, seed)
    m0_hat, m1_hat = crossfit_arm_outcomes(dataset, plan, oracle, seed)
    e_hat = crossfit_propensity(dataset, plan, oracle, seed)
    return dr_learner(dataset, m0_hat, m1_hat, e_hat, oracle, seed).estimates
