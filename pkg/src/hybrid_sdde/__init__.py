"""Partially truncated Euler-Maruyama simulation of super-linear SDDEs with
variable delay and Markovian switching."""

__version__ = "0.1.0"

from .markov import (Generator, RegimePath, TransitionMatrix, sample_next_state,
                     sample_regime_path, stationary_distribution, subsample_path,
                     transition_matrix)
from .model import (HybridSddeModel, ModelConstants, TruncationPolicy,
                    example_convergence_model, example_stability_model, get_builtin,
                    pi_delta, truncated_coefficients, truncated_parts, truncation_radius,
                    validate_policy)
from .solver import (PathRecord, SimulationGrid, delay_index, evaluate_history,
                     simulate_coupled, simulate_path, step_em, step_ptem)
