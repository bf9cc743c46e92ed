"""Picking the ratio threshold by cross-validation instead of fixing it.

Run with ``python demos/02_threshold_by_cross_validation.py``.
"""

# %%
import numpy as np

from ensvs import EnsembleConfig, SelectorConfig, ThresholdCvConfig, run_ensemble, tune_threshold
from ensvs.simulation import SimulationConfig, generate_dataset, score

np.set_printoptions(precision=3, suppress=True)

# %%
data, support = generate_dataset(SimulationConfig(n=200, p=60, rho=0.0, snr=2.0), 3)
cfg = EnsembleConfig(k=6, B=1000, master_seed=1, selector=SelectorConfig("stepwise_aic"))
result = run_ensemble(data, cfg)

# %% [markdown]
# Ordering columns by their ratio gives a nested family of models. Each candidate
# threshold keeps one of them; a 5-fold OLS prediction error scores each.

# %%
chosen, curve = tune_threshold(data, result.ratios, ThresholdCvConfig(folds=5, seed=0))
print("chosen threshold:", chosen)

# %%
for r in (0.5, 0.8, 0.95, chosen):
    m = score(result.ratios >= r, support)
    print(f"r={r:.3f}: TP {m.tp}, FP {m.fp}")

# %% [markdown]
# The same thing in one call: ``threshold="cv"`` runs the tuning inside
# ``run_ensemble`` and keeps the error curve on the result.

# %%
auto = run_ensemble(data, EnsembleConfig(k=6, B=1000, master_seed=1, threshold="cv",
                                         selector=SelectorConfig("stepwise_aic")))
print("threshold used:", auto.threshold_used)
for t, mse, sd in auto.cv_curve[-5:]:
    print(f"r >= {t:.3f}: cv mse {mse:.3f} (sd {sd:.3f})")
