"""Distribution-weighted combination of source predictors.

Given ``p`` source domains, each with a predictor that does well on it, find
mixture weights ``z`` so that the combined predictor does well on every
mixture of the sources.
"""
from .dc import (DcDecomposition, DcProblem, SolveResult, SolverConfig, check_balance, dca_solve,
                 fixed_point_iterate, objective)
from .domain import (DiscreteJointDistribution, GaussianMixtureDensity, GuaranteeReport, SimplexVector,
                     epsilon_target, guarantee_bound, marginal_x, mixture, renyi_d_alpha,
                     renyi_sup_ratio)
from .errors import DwmixError, SolverError, ValidationError
from .predictors import (LossSpec, ProbabilityHypothesis, RegressionHypothesis, combine,
                         convex_combination, dw_marginal, dw_normalized, dw_probability,
                         dw_regression, expected_loss)
from .scenarios import (Scenario, builtin, gaussian_classification_scenario, gaussian_regression_scenario,
                        load_scenario, lower_bound_crossentropy_instance, lower_bound_regression_instance,
                        robustness_sweep, save_scenario)

__version__ = "0.1.0"

__all__ = [
    "DcDecomposition", "DcProblem", "SolveResult", "SolverConfig", "check_balance", "dca_solve",
    "fixed_point_iterate", "objective", "DiscreteJointDistribution", "GaussianMixtureDensity",
    "GuaranteeReport", "SimplexVector", "epsilon_target", "guarantee_bound", "marginal_x", "mixture",
    "renyi_d_alpha", "renyi_sup_ratio", "DwmixError", "SolverError", "ValidationError", "LossSpec",
    "ProbabilityHypothesis", "RegressionHypothesis", "combine", "convex_combination", "dw_marginal",
    "dw_normalized", "dw_probability", "dw_regression", "expected_loss", "Scenario", "builtin",
    "load_scenario", "robustness_sweep", "save_scenario", "gaussian_classification_scenario",
    "gaussian_regression_scenario", "lower_bound_crossentropy_instance", "lower_bound_regression_instance",
]
