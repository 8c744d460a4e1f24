"""
The truncation map
==================

Only the super-linear parts ``F`` and ``G`` are evaluated at clipped
arguments. The clipping radius ``mu_inv(h(delta))`` grows slowly as the step
shrinks.
"""

# %%
import numpy as np

from hybrid_sdde.model import (example_convergence_model, pi_delta, truncated_parts,
                               truncation_radius, validate_policy)
from hybrid_sdde.rng import make_stream

model, policy, constants = example_convergence_model()

for delta in (1.0, 1e-2, 1e-4, 1e-8):
    print(f"delta={delta:<7g} radius={truncation_radius(policy, delta):.6f}")

# %% [markdown]
# The projection is radial and leaves the inside of the ball alone.

# %%
print(pi_delta(np.array([3.0, 4.0]), 1.0), pi_delta(np.array([0.3, 0.4]), 1.0))

f1, fd, g1, gd = truncated_parts(model, policy, 1e-2, [10.0], [10.0], 2)
print("F1 =", f1, " F_delta =", fd, " h =", policy.h(1e-2))

# %% [markdown]
# The bounded term ``y/(1+y^2)`` in regime 2 lets ``|F_delta|`` exceed
# ``h(delta)`` by up to one half near the edge of the ball, which the
# sampling check reports.

# %%
report = validate_policy(model, policy, 500, make_stream(0))
print(report.failures, report.mu_worst_point)
