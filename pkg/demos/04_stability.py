"""
Almost-sure exponential stability
=================================

Under the split stability conditions the exact solution decays with rate
``eta`` and the scheme keeps a rate ``gamma*``. Terminal Lyapunov estimates
of simulated paths should all be negative.
"""

# %%
import numpy as np

from hybrid_sdde.analysis import solve_c_star, solve_eta, solve_gamma_star, stability_study
from hybrid_sdde.model import example_policy, example_stability_model

model, params = example_stability_model()
print(f"eta = {solve_eta(params):.6f}, gamma* = {solve_gamma_star(params):.6f}")
for delta in (1e-2, 1e-3, 1e-4):
    print(f"delta={delta:g}: log C* = {np.log(solve_c_star(params, delta)):.6f}")

# %%
res = stability_study(model, example_policy(), params, 1e-3, 20.0, n_paths=200, seed=7)
print(f"{res.fraction_negative:.0%} of paths decay; median exponent {res.median_exponent:.3f}")
