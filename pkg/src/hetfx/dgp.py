"""Simulation scenarios with full ground truth.

Three effect-heterogeneity regimes over five covariates (income,
test_score, neighborhood continuous; minority, female binary):

* linear            -- effect 2 + 1.5 * minority
* complex_nonlinear -- effect 2 + 5 * minority * female * 1(income > 0)
                       + 2 * max(test_score, 0) * minority
* constant          -- effect 2 for everyone

Treatment is assigned with probability 0.4 below the sample median of
income and 0.6 at or above it. Potential outcomes are additive in a
unit noise term, so each unit's individual effect equals its
conditional average effect.

Continuous draws are quantized to a 2**-26 grid. Every structural sum
(baseline + noise, baseline + effect) is then exact in float64, which
makes counterfactual reconstruction from stored noise bitwise-exact
regardless of evaluation order.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import SCENARIO_FEATURES, Dataset, GroundTruth

#: Resolution of continuous draws; see module docstring.
_GRID = 2.0**26

#: Fixed per-column substream order. Appending new draws keeps old columns stable.
_STREAMS = ("income", "test_score", "neighborhood", "minority", "female", "treatment", "noise")

MINORITY_RATE = 0.4
FEMALE_RATE = 0.5
PROPENSITY_LOW = 0.4
PROPENSITY_HIGH = 0.6
BASE_EFFECT = 2.0


class Scenario(enum.Enum):
    """Effect-heterogeneity regime of a simulated dataset."""

    LINEAR = "linear"
    COMPLEX_NONLINEAR = "complex_nonlinear"
    CONSTANT = "constant"

    @classmethod
    def parse(cls, text: str) -> "Scenario":
        key = str(text).strip().lower().replace("-", "_")
        aliases = {
            "linear": cls.LINEAR,
            "complex": cls.COMPLEX_NONLINEAR,
            "complex_nonlinear": cls.COMPLEX_NONLINEAR,
            "constant": cls.CONSTANT,
        }
        if key not in aliases:
            raise ValueError(
                f"unknown scenario {text!r}; expected one of linear, complex_nonlinear, constant"
            )
        return aliases[key]


@dataclass(frozen=True)
class ScenarioSpec:
    """What to simulate: scenario kind, number of units, master seed."""

    kind: Scenario
    n: int
    seed: int

    def __post_init__(self):
        if isinstance(self.kind, str):
            object.__setattr__(self, "kind", Scenario.parse(self.kind))
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"n must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        object.__setattr__(self, "seed", int(self.seed))

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind.value, "n": self.n, "seed": self.seed})

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        payload = json.loads(text)
        missing = {"kind", "n", "seed"} - payload.keys()
        if missing:
            raise ValueError(f"scenario spec JSON missing keys: {sorted(missing)}")
        return cls(Scenario.parse(payload["kind"]), payload["n"], payload["seed"])


def _substream(seed: int, name: str) -> np.random.Generator:
    """Generator for one named draw column, derived from the master seed."""
    return np.random.Generator(
        np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(_STREAMS.index(name),)))
    )


def _quantize(values: np.ndarray) -> np.ndarray:
    return np.round(values * _GRID) / _GRID


def effect_surface(
    kind: Scenario,
    income: np.ndarray,
    test_score: np.ndarray,
    minority: np.ndarray,
    female: np.ndarray,
) -> np.ndarray:
    """Vectorized true conditional effect for each row of covariates."""
    kind = Scenario.parse(kind) if isinstance(kind, str) else kind
    income = np.asarray(income, dtype=np.float64)
    minority = np.asarray(minority, dtype=np.float64)
    if kind is Scenario.LINEAR:
        return BASE_EFFECT + 1.5 * minority
    if kind is Scenario.COMPLEX_NONLINEAR:
        test_score = np.asarray(test_score, dtype=np.float64)
        female = np.asarray(female, dtype=np.float64)
        boost = 5.0 * minority * female * (income > 0.0).astype(np.float64)
        slope = 2.0 * np.maximum(test_score, 0.0) * minority
        return BASE_EFFECT + boost + slope
    return np.full_like(income, BASE_EFFECT)


def true_cate(kind: Scenario | str, row: Mapping[str, float]) -> float:
    """True conditional average effect at one covariate record.

    The record must carry all five scenario covariates even when the
    scenario ignores some of them.
    """
    missing = [name for name in SCENARIO_FEATURES if name not in row]
    if missing:
        raise ValueError(f"covariate record missing {missing}; need all of {list(SCENARIO_FEATURES)}")
    value = effect_surface(
        kind,
        np.array([row["income"]], dtype=np.float64),
        np.array([row["test_score"]], dtype=np.float64),
        np.array([row["minority"]], dtype=np.float64),
        np.array([row["female"]], dtype=np.float64),
    )
    return float(value[0])


def propensity(income: float, income_median: float) -> float:
    """Treatment probability given income relative to the median.

    Ties go to the high side so the rule stays deterministic.
    """
    if not np.isfinite(income) or not np.isfinite(income_median):
        raise ValueError("income and income_median must be finite")
    return PROPENSITY_LOW if income < income_median else PROPENSITY_HIGH


def generate(spec: ScenarioSpec) -> tuple[Dataset, GroundTruth]:
    """Simulate one dataset plus its per-unit ground truth.

    Deterministic given ``spec.seed``: every column draws from its own
    substream in a fixed order, so results are reproducible bit for bit
    and independent of any later additions to the pipeline.
    """
    if not isinstance(spec, ScenarioSpec):
        spec = ScenarioSpec(*spec)
    n = spec.n

    income = _quantize(_substream(spec.seed, "income").standard_normal(n))
    test_score = _quantize(_substream(spec.seed, "test_score").standard_normal(n))
    neighborhood = _quantize(_substream(spec.seed, "neighborhood").standard_normal(n))
    minority = (_substream(spec.seed, "minority").random(n) < MINORITY_RATE).astype(np.float64)
    female = (_substream(spec.seed, "female").random(n) < FEMALE_RATE).astype(np.float64)

    income_median = float(np.median(income))
    pscore = np.where(income < income_median, PROPENSITY_LOW, PROPENSITY_HIGH)
    treatment = (_substream(spec.seed, "treatment").random(n) < pscore).astype(np.float64)

    u = _quantize(_substream(spec.seed, "noise").standard_normal(n))

    tau = effect_surface(spec.kind, income, test_score, minority, female)
    y0 = income + neighborhood + u
    y1 = y0 + tau
    outcome = np.where(treatment == 1.0, y1, y0)

    dataset = Dataset(
        covariates=np.column_stack([income, test_score, neighborhood, minority, female]),
        feature_names=SCENARIO_FEATURES,
        treatment=treatment,
        outcome=outcome,
    )
    truth = GroundTruth(
        tau_true=tau,
        ite_true=y1 - y0,
        y0=y0,
        y1=y1,
        u=u,
        propensity=pscore,
    )
    return dataset, truth
