"""Why a cluster can be infeasible, and how the minimum powers are built.

Run with ``python3 demos/feasibility_walkthrough.py``.
"""

import numpy as np

from noma_ee.channel import noise_power
from noma_ee.cluster import ClusterInstance, min_powers, per_user_rates, qos_violation

noise = noise_power(-174.0, 180e3)
gains = np.array([1.10e-9, 1.34e-10, 4.25e-11])

# With SIC the last decoded user sees only noise, so its minimum power comes
# first: sigma^2 (2^R - 1) / h.  Each earlier user must then beat the noise
# plus everything decoded after it, which multiplies the requirement by
# 2^(sum of later targets).
inst = ClusterInstance(gains, 1.5, 1e-3, 3e-3, noise)
report = min_powers(inst)
print("minimum powers (W):", report.powers)
print("rates at those powers:", per_user_rates(inst, report.powers))

# Lowering any one of them by 1% breaks somebody's rate target.
for l in range(3):
    p = report.powers.copy()
    p[l] *= 0.99
    print(f"user {l + 1} at 99%: worst rate shortfall {qos_violation(inst, p):.2e} bit/s/Hz")

# A cap below a minimum power makes the cluster infeasible.  The report names
# the first user that cannot reach its target.
tight = ClusterInstance(gains, 1.5, 1e-5, 3e-3, noise)
report = min_powers(tight)
print("\ncap 1e-5 W feasible:", report.feasible, "first violation: user", report.first_violation + 1)
