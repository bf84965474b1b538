"""Augmented minimax linear estimation of linear functionals of a regression."""

from .basis import BasisSpec, ExtendedFeatureSpec, design_matrix, enumerate_terms, extended_features, hermite_eval
from .data import Dataset, FoldAssignment, load_csv, make_folds
from .estimand import (BalanceProblem, Block, EstimandKind, EstimandSpec, build_ape_clm, build_dist_shift,
                       build_mar, build_problem, imbalance, plugin_value)
from .estimators import (EstimateReport, aml_estimate, dr_oracle_estimate, dr_plugin_estimate, mlin_estimate,
                         plugin_weight_estimate, variance_estimate)
from .nuisance import RegressionAdjustment, fit_regression_adjustment, lasso_cd, lasso_cv, r_learner_tau
from .solver import SolverConfig, WeightsSolution, oracle_solve_small, prox_sq_l1, solve_weights

__all__ = [
    "BasisSpec", "ExtendedFeatureSpec", "design_matrix", "enumerate_terms", "extended_features", "hermite_eval",
    "Dataset", "FoldAssignment", "load_csv", "make_folds",
    "BalanceProblem", "Block", "EstimandKind", "EstimandSpec", "build_ape_clm", "build_dist_shift", "build_mar",
    "build_problem", "imbalance", "plugin_value",
    "EstimateReport", "aml_estimate", "dr_oracle_estimate", "dr_plugin_estimate", "mlin_estimate",
    "plugin_weight_estimate", "variance_estimate",
    "RegressionAdjustment", "fit_regression_adjustment", "lasso_cd", "lasso_cv", "r_learner_tau",
    "SolverConfig", "WeightsSolution", "oracle_solve_small", "prox_sq_l1", "solve_weights",
]
