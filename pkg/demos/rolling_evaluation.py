# %% [markdown]
# # Rolling evaluation on a synthetic four-zone house
#
# We simulate the RC-house preset with measurement noise, fit a causal
# multi-step predictor on one week of 5-minute data, predict 12 hours ahead
# from two hours of history, and repeat every three hours. The per-step
# error statistics show how uncertainty grows with the horizon.

# %%
import os

import numpy as np

from flexdemand import evaluation as ev
from flexdemand import synthetic as syn
from flexdemand.ingest import IOTable

OUT = os.path.join(os.path.dirname(os.path.abspath(__file__)), "out", "rolling")

house = syn.rc_house()
cfg = ev.EvalConfig(window=2016, n_past=24, n_future=144, stride=36)
length = cfg.span + 15 * cfg.stride
u = syn.rc_house_inputs(length, seed=0)
y = syn.simulate(house, u, 0.2, seed=1, noise="output")
print(f"{length} samples, {ev.count_windows(length, cfg)} evaluations")

# %% [markdown]
# Fit and predict in every window. Each window trains only on its own
# past, so no prediction ever sees the samples it is scored on.

# %%
stats = ev.rolling_eval(IOTable(0.0, 300.0, u, y), cfg)
for hours in (1, 3, 6, 12):
    k = hours * 12 - 1
    print(f"{hours:>2} h ahead: error std per zone {np.round(stats.std[k], 3)}")

# %% [markdown]
# The errors are close to the 0.2 degC measurement noise at short horizons
# and stay well below 1 degC at 12 hours. A histogram of all residuals
# 12 hours ahead:

# %%
hist = ev.error_histogram(stats.residuals[:, -1, :], 0.1)
for lo, c in zip(hist.edges[:-1], hist.counts):
    print(f"[{lo:+.2f}, {lo + 0.1:+.2f})  {'#' * int(c)}")

# %% [markdown]
# Write the CSV/JSON report and one SVG per zone.

# %%
written = ev.report(stats, OUT, plots=True)
print("\n".join(written))
