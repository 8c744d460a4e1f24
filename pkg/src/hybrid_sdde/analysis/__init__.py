"""Experiment harness: convergence and stability studies, rate equations, assumption checks."""

from .checks import (CheckReport, check_khasminskii, check_monotonicity,
                     check_stability_split, check_truncated_khasminskii)
from .convergence import ConvergenceStudyResult, fit_rate, rate_condition, strong_error_study
from .roots import (StabilityParams, bisect, j_function, solve_c_star, solve_eta,
                    solve_gamma_star)
from .stability import (StabilityStudyResult, lyapunov_estimate, lyapunov_regression,
                        stability_study)

__all__ = [
    "CheckReport", "ConvergenceStudyResult", "StabilityParams", "StabilityStudyResult",
    "bisect", "check_khasminskii", "check_monotonicity", "check_stability_split",
    "check_truncated_khasminskii", "fit_rate", "j_function", "lyapunov_estimate",
    "lyapunov_regression", "rate_condition", "solve_c_star", "solve_eta",
    "solve_gamma_star", "stability_study", "strong_error_study",
]
