# %% [markdown]
# # Hourly heat-pump energy: expected value, upper bounds and cost
#
# Hourly records aggregate the outdoor temperature, how many 5-minute
# samples each unit was on, and the summed actuation feature. We fit an
# expected-value model and two quantile models on half of a synthetic
# set, check how often the quantile models upper-bound the other half,
# and price a day of predicted demand.

# %%
import numpy as np

from flexdemand import economics as eco
from flexdemand import energy as en
from flexdemand import synthetic as syn

alpha = (-0.05, [0.02, 0.02, 0.03, 0.02], [0.04, 0.05, 0.03, 0.04])
records, _ = syn.energy_records(4000, *alpha, seed=3, noise_scale=0.5)
train, test = records[:2000], records[2000:]

# %% [markdown]
# The feature for a single unit running at fan level 5, set point 20 degC
# and volume temperature 10 degC:

# %%
print(en.feature(en.HPSetting(1, 5, 20.0, 10.0)))

# %% [markdown]
# Fit. The joint quantile fit keeps the 90 % model below the 95 % model on
# every training record.

# %%
expected = en.fit_energy(train)
q90, q95 = en.fit_energy_quantiles(train, [0.9, 0.95])
print("expected-value coefficients", np.round(expected.coefficients, 4))

actual = np.array([r.energy for r in test])
for m in (q90, q95):
    share = np.mean(en.predict_energy(m, test) >= actual)
    print(f"tau {m.tau}: upper-bounds {share:.1%} of held-out hours")

# %% [markdown]
# Cost of one day: spot price times energy plus the monthly peak charge,
# which depends on the mean of the three largest hours.

# %%
day = test[:24]
prices = eco.PriceSeries.from_values(0.05 + 0.1 * np.sin(np.linspace(0, np.pi, 24)) ** 2,
                                     start=day[0].hour)
schedule = eco.PenaltySchedule((0.0, 1.0, 2.0), (0.0, 30.0, 80.0))
for name, m in (("expected", expected), ("q95", q95)):
    P = en.predict_energy(m, day)
    print(f"{name:>8}: spot {eco.spot_cost(P, prices):.3f}, "
          f"total {eco.total_cost(P, prices, schedule):.3f}")
