"""Heterogeneous treatment effect estimation toolkit.

Simulated benchmark scenarios with exact ground truth, an OLS
interaction baseline, an honest causal forest, five meta-learners over
pluggable regression oracles, a structural counterfactual engine, and
the evaluation machinery tying them together.
"""

from .data import CateEstimates, Dataset, GroundTruth
from .dgp import Scenario, ScenarioSpec, generate, propensity, true_cate
from .evaluation import MethodReport, bias_variance_mse, coverage, overlap_check, subgroup_report
from .forest import ForestModel, ForestParams, fit_nuisance, grow, predict, variable_importance
from .interaction import DesignSpec, LinearModel, build_design, fit_ols, predict_cate
from .metalearners import (
    CrossFitPlan,
    ForestOracle,
    LinearOracle,
    dr_learner,
    r_learner,
    s_learner,
    t_learner,
    x_learner,
)
from .scm import StructuralModel, abduct, counterfactual, intervene, ite, scenario_model

__version__ = "0.1.0"

__all__ = [
    "CateEstimates",
    "CrossFitPlan",
    "Dataset",
    "DesignSpec",
    "ForestModel",
    "ForestOracle",
    "ForestParams",
    "GroundTruth",
    "LinearModel",
    "LinearOracle",
    "MethodReport",
    "Scenario",
    "ScenarioSpec",
    "StructuralModel",
    "abduct",
    "bias_variance_mse",
    "build_design",
    "counterfactual",
    "coverage",
    "dr_learner",
    "fit_nuisance",
    "fit_ols",
    "generate",
    "grow",
    "intervene",
    "ite",
    "overlap_check",
    "predict",
    "predict_cate",
    "propensity",
    "r_learner",
    "s_learner",
    "scenario_model",
    "subgroup_report",
    "t_learner",
    "true_cate",
    "variable_importance",
    "x_learner",
]
