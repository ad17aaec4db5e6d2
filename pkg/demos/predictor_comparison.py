# %% [markdown]
# # One-step rollout, multi-step and sparse (FL) predictors
#
# On a small random system with innovation noise we compare three ways to
# predict 30 steps ahead from the same data: iterating a one-step
# predictor, a direct multi-step map with different structures, and the
# per-query sparse combination of trajectory-library columns.

# %%
import time

import numpy as np

from flexdemand import predictors as P
from flexdemand import synthetic as syn
from flexdemand.trajectory import build_trajectory_data

NP, NF, N = 12, 30, 400
plant = syn.random_stable_lti(3, 2, 2, 0.9, seed=4)
L = N + NP + NF - 1
u = syn.prbs(L + 40 * (NP + NF), 2, seed=5)
y = syn.simulate(plant, u, 0.05, seed=6)
data = build_trajectory_data([(u[:L], y[:L])], NP, NF)

queries = []
for k in range(40):
    s = L + k * (NP + NF)
    queries.append(((u[s:s + NP], y[s:s + NP], u[s + NP:s + NP + NF]), y[s + NP:s + NP + NF].ravel()))

# %% [markdown]
# Fit all predictors on the same trajectory data.

# %%
one = P.fit_one_step(data)
predictors = {"one-step rollout": lambda q: P.rollout_one_step(one, *q)}
for structure in P.STRUCTURES:
    pred = P.fit_multi_step(data, structure)
    predictors[structure] = lambda q, pred=pred: pred.predict(*q)
fl = P.fit_fl(data, lambda1=1.0, lambda2=1.0)
predictors["FL"] = lambda q: fl.predict(*q)

# %% [markdown]
# Root-mean-square error over the horizon and the time per query.

# %%
for name, f in predictors.items():
    t0 = time.perf_counter()
    err = np.array([f(q) - truth for q, truth in queries])
    dt = (time.perf_counter() - t0) / len(queries)
    print(f"{name:>16}: rmse {np.sqrt(np.mean(err ** 2)):.4f}, {dt * 1e3:8.2f} ms/query")

# %% [markdown]
# The FL predictor solves a convex program per query and is orders of
# magnitude slower; the multi-step maps are a single matrix product.
