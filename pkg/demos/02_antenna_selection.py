"""Switching some transmit antennas off can help an MMSE receiver.

For i.i.d. channels the first-order value with s equal-power antennas has a
closed form. At high SNR the best s is below t; at low SNR all antennas are
used. A short Monte Carlo run confirms the trend at 15 dB.
"""

import numpy as np

from mimommse import ChannelModel, antenna_selection_iid, emi_estimate
from mimommse.optimize import antenna_selection_values

t = 8
for snr_db in (0, 5, 10, 15, 20):
    s, value = antenna_selection_iid(t, 10 ** (-snr_db / 10))
    print(f"SNR {snr_db:>2} dB: use {s} of {t} antennas ({value:.3f} nats)")

sigma2 = 10 ** -1.5
model = ChannelModel.iid(t, t, sigma2)
closed = antenna_selection_values(t, sigma2)
print("\n s  closed form  Monte Carlo")
for s in range(4, t + 1):
    k = np.diag(np.sqrt(np.r_[np.full(s, t / s), np.zeros(t - s)]))
    mc = emi_estimate(model, k, n=2000, seed=1)
    print(f"{s:>2}  {closed[s - 1]:>10.3f}  {mc.mean:>7.3f} +- {mc.std_error:.3f}")
