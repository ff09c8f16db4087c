"""Single cluster: how the energy-efficient powers react to a growing power budget.

Run with ``python3 demos/single_cluster_sweep.py``.
"""

import numpy as np

from noma_ee.channel import dbm_to_watt, noise_power
from noma_ee.cluster import ClusterInstance, maximize_ee, maximize_se, min_powers
from noma_ee.oma import oma_maximize_ee

# Three users share one 180 kHz resource block.  The gains are listed from
# strongest to weakest, which is also the order the receiver decodes them in.
gains = np.array([1.10e-9, 1.34e-10, 4.25e-11])
noise = noise_power(-174.0, 180e3)

# Each user needs 1.5 bit/s/Hz and every user burns 1 mW of circuit power.
def cluster(pmax_dbm):
    return ClusterInstance(gains, 1.5, dbm_to_watt(pmax_dbm), 1e-3 * gains.size, noise)

# Sweep the per-user power cap.  Below about -15 dBm the rate targets cannot be
# met at all; the solvers report that instead of returning powers.  OMA
# needs more power for the same rates, so it shows 0 where it is infeasible.
print(f"{'pmax dBm':>8} {'MaxEE':>10} {'MaxSE':>10} {'OMA':>10}   P1 (W)     P2 (W)     P3 (W)")
for dbm in np.arange(-20.0, 31.0, 5.0):
    inst = cluster(dbm)
    ee = maximize_ee(inst)
    if not ee.feasible:
        print(f"{dbm:8.0f}  infeasible (user {ee.diagnostics['first_violation'] + 1} misses its rate)")
        continue
    se = maximize_se(inst)
    oma = oma_maximize_ee(inst)
    print(f"{dbm:8.0f} {ee.ee:10.1f} {se.ee:10.1f} {oma.ee:10.1f}   "
          + " ".join(f"{p:.3e}" for p in ee.powers))

# At a small budget the strongest user transmits at its cap, because every
# extra watt still pays for itself.  Past a threshold its power freezes and the
# EE saturates, while the sum-rate maximiser keeps spending and loses EE.
# The two weaker users never do better than their minimum powers:
inst = cluster(30.0)
print("\nminimum powers at 30 dBm:", min_powers(inst).powers)
print("MaxEE powers at 30 dBm:  ", maximize_ee(inst).powers)
