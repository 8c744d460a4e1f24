"""
Strong convergence order
========================

Coupled coarse and fine paths share one Brownian path and one regime chain.
The RMS terminal error against a fine reference is fitted on log-log axes.
The same study is available as ``hybrid-sdde converge --config demos/convergence.json``.
"""

# %%
from hybrid_sdde.analysis import strong_error_study
from hybrid_sdde.model import example_convergence_model

model, policy, _ = example_convergence_model()
res = strong_error_study(model, policy, [2e-4, 4e-4, 8e-4, 16e-4], 1e-4, 1.0,
                         n_paths=500, seed=1)

for d, e in zip(res.deltas, res.rms_errors):
    print(f"delta={d:.1e}  rms={e:.4e}")
print(f"slope {res.slope:.3f} +/- {res.slope_stderr:.3f}")
