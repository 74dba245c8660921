"""Designing a precoder from the corrected approximation.

The precoder K = U D^{-1/2} Lambda^{1/2} puts power lam_j on the j-th
eigenmode of the transmit correlation. Maximizing i_bar over lam is cheap
(no simulation), and the resulting precoder is then checked by Monte Carlo
against no precoding and against the i_hat-optimal design. With this strongly
correlated transmitter both designs put all power on the dominant mode.
"""

import math

from mimommse import ChannelModel, ClusterSpec, emi_estimate, multistart

model = ChannelModel.clustered(
    ClusterSpec(math.pi / 4, 0.5, 4), ClusterSpec(math.pi / 12, 0.4, 4), sigma2=10 ** -1.0
)

designs = {"no precoding": None}
for name, corrected in (("i_bar design", True), ("i_hat design", False)):
    res = multistart(model.c_t, model.c_r, model.sigma2, corrected=corrected)
    print(f"{name}: lam = {res.lambda_opt.round(3)}, surrogate {res.objective:.4f} nats, "
          f"{res.elapsed * 1e3:.0f} ms")
    designs[name] = res.precoder

print()
for name, k in designs.items():
    # evaluation streams far from anything used above
    mc = emi_estimate(model, k, n=5000, seed=7, start=10**6)
    print(f"{name:>13}: {mc.mean:.4f} +- {mc.std_error:.4f} nats")
