"""Optimizing the simulated mutual information directly, and what it costs.

The stochastic optimizer draws fresh channels at every iteration and uses
finite differences on them, so it needs many thousands of simulated channel
matrices where the surrogate needs none. Here we run a short version and
compare the outcome and the wall-clock time with the surrogate design.
"""

import math
import time

from mimommse import ChannelModel, ClusterSpec, emi_estimate, multistart, optimize_true_emi
from mimommse.optimize import PGOptions

model = ChannelModel.clustered(
    ClusterSpec(math.pi / 4, 0.5, 4), ClusterSpec(math.pi / 12, 0.4, 4), sigma2=0.1
)

t0 = time.perf_counter()
surrogate = multistart(model.c_t, model.c_r, model.sigma2)
t_sur = time.perf_counter() - t0

t0 = time.perf_counter()
direct = optimize_true_emi(model, structured=True, n_mc=500, seed=0, options=PGOptions(max_iter=30))
t_dir = time.perf_counter() - t0

sur_mc = emi_estimate(model, surrogate.precoder, n=5000, seed=9, start=10**6)
dir_mc = emi_estimate(model, direct.precoder, n=5000, seed=9, start=10**6)
print(f"surrogate design: {sur_mc.mean:.4f} +- {sur_mc.std_error:.4f} nats in {t_sur:.2f} s")
print(f"direct Monte Carlo design: {dir_mc.mean:.4f} +- {dir_mc.std_error:.4f} nats in {t_dir:.2f} s")
