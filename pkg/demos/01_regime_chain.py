"""
Regime chain on a grid
======================

The switching process is a continuous-time Markov chain observed every
``delta`` time units. Its one-step transition matrix is ``expm(delta Gamma)``.
"""

# %%
import numpy as np

from hybrid_sdde.markov import sample_regime_path, stationary_distribution, transition_matrix
from hybrid_sdde.model import EXAMPLE_RATES
from hybrid_sdde.rng import CHAIN, make_stream

# %% [markdown]
# The two-state benchmark generator has eigenvalues 0 and -3, so the
# transition matrix has a closed form we can compare against.

# %%
for delta in (0.01, 0.1, 1.0):
    e = np.exp(-3 * delta)
    exact = np.array([[1 + 2 * e, 2 - 2 * e], [1 - e, 2 + e]]) / 3
    P = transition_matrix(EXAMPLE_RATES, delta)
    print(f"delta={delta:<5} max |expm - closed form| = {np.max(np.abs(P.probs - exact)):.1e}")

# %% [markdown]
# A long path spends about a third of its time in regime 1.

# %%
path = sample_regime_path(EXAMPLE_RATES, 0.1, 1, 200_000, make_stream(0, 0, CHAIN))
print("occupancy:", np.bincount(path.states)[1:] / len(path.states))
print("stationary:", stationary_distribution(EXAMPLE_RATES))
