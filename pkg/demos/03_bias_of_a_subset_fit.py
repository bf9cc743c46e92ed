"""How much a fit on a few columns is pulled by the columns it leaves out.

Run with ``python demos/03_bias_of_a_subset_fit.py``; a few seconds.
"""

# %%
import numpy as np

from ensvs import expected_instance_bias
from ensvs.simulation import compound_symmetry

rng = np.random.default_rng(0)
beta = np.array([1.0, 1.0, 0.0, 0.0])

# %% [markdown]
# Correlated covariates: regressing on column 0 alone absorbs part of the effect of
# column 1, which it never sees.

# %%
x = rng.multivariate_normal(np.zeros(4), compound_symmetry(4, 0.4), size=200)
for subset in ([0], [0, 1], [0, 2], [2, 3]):
    bias, cov = expected_instance_bias(x, beta, subset)
    print(subset, "bias", np.round(bias, 3), "sd", np.round(np.sqrt(np.diag(cov)), 3))

# %% [markdown]
# A Monte Carlo check of the first line: redraw the noise, refit, average.

# %%
draws = rng.standard_normal((5000, 200))
y = x @ beta + draws
xs = x[:, [0]]
est = (y @ xs / (xs[:, 0] @ xs[:, 0])).ravel() - 1.0
print(f"simulated bias {est.mean():.3f} +- {est.std() / np.sqrt(est.size):.3f}")

# %% [markdown]
# With orthogonal columns the left-out effects project to zero.

# %%
q = np.linalg.qr(x)[0] * np.sqrt(200)
print("orthogonal design bias:", expected_instance_bias(q, beta, [0, 2])[0])
