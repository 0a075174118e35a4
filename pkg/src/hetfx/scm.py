"""Structural-causal-model engine for additive-noise models.

Each endogenous variable is governed by a deterministic mechanism of
its parents plus (optionally) an additive noise term. That restriction
makes the counterfactual three-step procedure closed-form:

1. abduct  -- recover each unit's noise from its observed values,
2. intervene -- replace a variable's mechanism with a constant,
3. forward -- re-simulate the modified model with the recovered noise.

Mechanisms are sums of coefficient * product-of-transformed-parents
terms, where a factor transform is one of ``identity``,
``positive_part`` (max(x, 0)) or ``indicator_positive`` (1 if x > 0).
That family covers the built-in simulation scenarios exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from typing import Iterable, Mapping

import numpy as np

from .data import Dataset, write_csv
from .dgp import Scenario

TRANSFORMS = ("identity", "positive_part", "indicator_positive")


def _apply_transform(transform: str, value: float) -> float:
    if transform == "identity":
        return value
    if transform == "positive_part":
        return value if value > 0.0 else 0.0
    if transform == "indicator_positive":
        return 1.0 if value > 0.0 else 0.0
    raise ValueError(f"unknown transform {transform!r}; expected one of {TRANSFORMS}")


@dataclass(frozen=True)
class Factor:
    """One multiplicand of a term: a parent variable under a transform."""

    variable: str
    transform: str = "identity"

    def __post_init__(self):
        if self.transform not in TRANSFORMS:
            raise ValueError(f"unknown transform {self.transform!r}; expected one of {TRANSFORMS}")


@dataclass(frozen=True)
class Term:
    coefficient: float
    factors: tuple[Factor, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))


@dataclass(frozen=True)
class Equation:
    """Structural equation: value = intercept + sum of terms (+ noise)."""

    name: str
    parents: tuple[str, ...] = ()
    intercept: float = 0.0
    terms: tuple[Term, ...] = ()
    noise: bool = True

    def __post_init__(self):
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "terms", tuple(self.terms))
        for term in self.terms:
            for factor in term.factors:
                if factor.variable not in self.parents:
                    raise ValueError(
                        f"equation {self.name!r}: term references {factor.variable!r} "
                        "which is not a declared parent"
                    )

    def evaluate(self, values: Mapping[str, float]) -> float:
        """Deterministic part of the mechanism at the given parent values."""
        total = self.intercept
        for term in self.terms:
            product = term.coefficient
            for factor in term.factors:
                product *= _apply_transform(factor.transform, values[factor.variable])
            total += product
        return total


@dataclass(frozen=True)
class StructuralModel:
    """Topologically ordered additive-noise structural equations."""

    equations: tuple[Equation, ...]

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        seen: set[str] = set()
        for eq in self.equations:
            if eq.name in seen:
                raise ValueError(f"duplicate equation for variable {eq.name!r}")
            for parent in eq.parents:
                if parent not in seen:
                    raise ValueError(
                        f"equation {eq.name!r} references parent {parent!r} that is not "
                        "declared earlier; equations must be in topological order"
                    )
            seen.add(eq.name)

    @property
    def variables(self) -> tuple[str, ...]:
        return tuple(eq.name for eq in self.equations)

    def equation(self, name: str) -> Equation:
        for eq in self.equations:
            if eq.name == name:
                return eq
        raise KeyError(f"no equation for variable {name!r}; have {list(self.variables)}")


# ---------------------------------------------------------------------------
# Abduction / action / prediction
# ---------------------------------------------------------------------------


def _invert_additive(deterministic: float, observed: float) -> float:
    """Noise value whose addition to the deterministic part reproduces
    ``observed`` exactly, correcting for one-ulp rounding when needed."""
    noise = observed - deterministic
    if deterministic + noise == observed:
        return noise
    for candidate in (np.nextafter(noise, math.inf), np.nextafter(noise, -math.inf)):
        if deterministic + candidate == observed:
            return float(candidate)
    raise ValueError(
        f"cannot reproduce observed value {observed!r} from deterministic part "
        f"{deterministic!r} by any additive noise"
    )


def abduct(model: StructuralModel, evidence: Mapping[str, float]) -> dict[str, float]:
    """Recover each variable's noise from a full assignment of observed values.

    Requires every mechanism to be additive in its noise (the only kind
    this engine builds); zero-noise mechanisms must match the evidence
    exactly, otherwise there is no noise to absorb the gap.
    """
    missing = [eq.name for eq in model.equations if eq.name not in evidence]
    if missing:
        raise ValueError(f"evidence must cover every endogenous variable; missing {missing}")
    noise: dict[str, float] = {}
    for eq in model.equations:
        observed = float(evidence[eq.name])
        if not math.isfinite(observed):
            raise ValueError(f"evidence for {eq.name!r} is not finite")
        deterministic = eq.evaluate(evidence)
        if not eq.noise:
            if observed != deterministic:
                raise ValueError(
                    f"evidence for {eq.name!r} ({observed!r}) is inconsistent with its "
                    f"deterministic mechanism value {deterministic!r}"
                )
            continue
        noise[eq.name] = _invert_additive(deterministic, observed)
    reconstructed = forward(model, noise)
    mismatched = [v for v in model.variables if reconstructed[v] != float(evidence[v])]
    if mismatched:
        raise ValueError(f"abduction failed to reproduce evidence for {mismatched}")
    return noise


def forward(model: StructuralModel, noise: Mapping[str, float]) -> dict[str, float]:
    """Simulate every variable in order from the given noise assignment."""
    values: dict[str, float] = {}
    for eq in model.equations:
        value = eq.evaluate(values)
        if eq.noise:
            if eq.name not in noise:
                raise ValueError(f"missing noise value for {eq.name!r}")
            value = value + noise[eq.name]
        values[eq.name] = value
    return values


def intervene(model: StructuralModel, variable: str, value: float) -> StructuralModel:
    """Return a copy of the model with ``variable`` pinned to a constant.

    All other equations are untouched; repeated interventions on the
    same variable overwrite each other (last write wins).
    """
    model.equation(variable)  # raises KeyError on unknown names
    replaced = Equation(name=variable, parents=(), intercept=float(value), terms=(), noise=False)
    return StructuralModel(
        tuple(replaced if eq.name == variable else eq for eq in model.equations)
    )


def counterfactual(
    model: StructuralModel,
    evidence: Mapping[str, float],
    intervention: Mapping[str, float],
    query: str,
) -> float:
    """Value ``query`` would have taken under the intervention, for the
    unit whose noise is recovered from ``evidence``."""
    model.equation(query)
    noise = abduct(model, evidence)
    modified = model
    for variable, value in intervention.items():
        modified = intervene(modified, variable, value)
    return forward(modified, noise)[query]


def ite(
    model: StructuralModel,
    evidence: Mapping[str, float],
    treatment: str = "W",
    outcome: str = "Y",
) -> float:
    """Individual treatment effect: outcome under treatment minus under control."""
    noise = abduct(model, evidence)
    treated = forward(intervene(model, treatment, 1.0), noise)[outcome]
    control = forward(intervene(model, treatment, 0.0), noise)[outcome]
    return treated - control


# ---------------------------------------------------------------------------
# Built-in model for the simulation scenarios
# ---------------------------------------------------------------------------


def scenario_model(kind: Scenario | str) -> StructuralModel:
    """Structural model generating the named simulation scenario.

    Covariates are exogenous roots, treatment propensity steps at zero
    income (the population median), and the outcome combines the
    income + neighborhood baseline with the scenario's treatment-effect
    terms plus unit noise.
    """
    kind = Scenario.parse(kind) if isinstance(kind, str) else kind
    effect_terms = [Term(2.0, (Factor("W"),))]
    if kind is Scenario.LINEAR:
        effect_terms.append(Term(1.5, (Factor("W"), Factor("minority"))))
    elif kind is Scenario.COMPLEX_NONLINEAR:
        effect_terms.append(
            Term(
                5.0,
                (
                    Factor("W"),
                    Factor("minority"),
                    Factor("female"),
                    Factor("income", "indicator_positive"),
                ),
            )
        )
        effect_terms.append(
            Term(2.0, (Factor("W"), Factor("test_score", "positive_part"), Factor("minority")))
        )
    return StructuralModel(
        (
            Equation("income"),
            Equation("test_score"),
            Equation("neighborhood"),
            Equation("minority"),
            Equation("female"),
            Equation(
                "W",
                parents=("income",),
                intercept=0.4,
                terms=(Term(0.2, (Factor("income", "indicator_positive"),)),),
            ),
            Equation(
                "Y",
                parents=("income", "neighborhood", "W", "minority", "female", "test_score"),
                terms=(
                    Term(1.0, (Factor("income"),)),
                    Term(1.0, (Factor("neighborhood"),)),
                    *effect_terms,
                ),
            ),
        )
    )


def evidence_from_dataset(dataset: Dataset, index: int) -> dict[str, float]:
    """Full endogenous assignment for one unit of a scenario dataset."""
    record = dataset.row(index)
    record["W"] = float(dataset.treatment[index])
    record["Y"] = float(dataset.outcome[index])
    return record


def write_counterfactual_csv(model: StructuralModel, dataset: Dataset, path) -> None:
    """Per-unit factual outcome, both counterfactual outcomes, and their gap."""

    def rows():
        for i in range(dataset.n):
            evidence = evidence_from_dataset(dataset, i)
            noise = abduct(model, evidence)
            y_w0 = forward(intervene(model, "W", 0.0), noise)["Y"]
            y_w1 = forward(intervene(model, "W", 1.0), noise)["Y"]
            yield [i, evidence["Y"], y_w0, y_w1, y_w1 - y_w0]

    write_csv(path, ["unit_id", "y_factual", "y_cf_w0", "y_cf_w1", "ite"], rows())


# ---------------------------------------------------------------------------
# JSON schema
# ---------------------------------------------------------------------------

_FORMAT = "hetfx-scm-v1"


def model_to_json(model: StructuralModel) -> str:
    payload = {
        "format": _FORMAT,
        "variables": [
            {
                "name": eq.name,
                "parents": list(eq.parents),
                "intercept": eq.intercept,
                "terms": [
                    {
                        "coefficient": term.coefficient,
                        "factors": [
                            {"variable": f.variable, "transform": f.transform}
                            for f in term.factors
                        ],
                    }
                    for term in eq.terms
                ],
                "noise": eq.noise,
            }
            for eq in model.equations
        ],
    }
    return json.dumps(payload, indent=2)


def model_from_json(text: str) -> StructuralModel:
    payload = json.loads(text)
    if payload.get("format") != _FORMAT:
        raise ValueError(f"unsupported model format {payload.get('format')!r}, expected {_FORMAT!r}")
    equations = []
    for var in payload["variables"]:
        equations.append(
            Equation(
                name=var["name"],
                parents=tuple(var.get("parents", ())),
                intercept=float(var.get("intercept", 0.0)),
                terms=tuple(
                    Term(
                        float(term["coefficient"]),
                        tuple(
                            Factor(f["variable"], f.get("transform", "identity"))
                            for f in term["factors"]
                        ),
                    )
                    for term in var.get("terms", ())
                ),
                noise=bool(var.get("noise", True)),
            )
        )
    return StructuralModel(tuple(equations))


def load_model(path) -> StructuralModel:
    with open(path) as handle:
        return model_from_json(handle.read())


def bundled_model_json() -> str:
    """JSON text of the shipped complex-scenario model (schema example)."""
    return (
        importlib_resources.files("hetfx.resources")
        .joinpath("scm_complex_scenario.json")
        .read_text()
    )
