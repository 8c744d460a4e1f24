"""
Why truncate
============

Started far from the origin, classical Euler-Maruyama overshoots on the
quintic drift and diverges within a few steps. The truncated scheme stays
bounded with the same noise.
"""

# %%
import numpy as np

from hybrid_sdde.model import example_convergence_model
from hybrid_sdde.solver import simulate_batch

model, policy, _ = example_convergence_model()
em = simulate_batch(model, policy, [0.1], 5.0, 3, range(100), scheme="em")[0]
ptem = simulate_batch(model, policy, [0.1], 5.0, 3, range(100))[0]

print("EM blow-up steps:", np.bincount(em.blowup_step[em.blowup_step >= 0]).nonzero()[0])
print("PTEM finite paths:", int(ptem.finite.sum()), "max |X|:", np.abs(ptem.states).max())
