"""Two users: which corner of the power box is optimal, and why decode order matters.

Run with ``python3 demos/two_user_phases.py``.
"""

import numpy as np

from noma_ee.channel import dbm_to_watt, noise_power
from noma_ee.cluster import ClusterInstance, maximize_ee
from noma_ee.two_user import (classify_phase_case1, classify_phase_case2, corner_gradients,
                              solve_case1, solve_case2)

gains = np.array([1.10e-9, 1.34e-10])
noise = noise_power(-174.0, 180e3)

# The closed-form solver looks at the sign of the EE gradient at the corners
# of the feasible box.  The sign pattern (the "phase") says which constraints
# are active, and the optimum is then a corner, an edge root found by
# bisection, or the point where the weak user's rate target binds.
print("strong user decoded first (Case I) versus weak user first (Case II)\n")
print(f"{'dBm':>5} {'Case I':>8} {'EE':>9} {'Case II':>9} {'EE':>9}  d1(max,max)  d2(max,max)")
for dbm in np.arange(-16.0, 21.0, 2.0):
    inst = ClusterInstance(gains, 1.5, dbm_to_watt(dbm), 2e-3, noise)
    one, two = solve_case1(inst), solve_case2(inst)
    if not one.feasible:
        continue
    g = corner_gradients(inst)
    label2 = classify_phase_case2(inst).phase.name if two.feasible else "-"
    ee2 = f"{two.ee:9.1f}" if two.feasible else f"{'-':>9}"
    print(f"{dbm:5.0f} {classify_phase_case1(inst).phase.name:>8} {one.ee:9.1f} {label2:>9} {ee2}"
          f"  {g.d1_max_max:+.3e}  {g.d2_max_max:+.3e}")

# Decoding the strong user first is never worse.  The closed form agrees with
# the general numerical solver to far better than 1e-5:
inst = ClusterInstance(gains, 1.5, dbm_to_watt(0.0), 2e-3, noise)
a, b = solve_case1(inst), maximize_ee(inst)
print("\nclosed form:", a.powers, a.ee)
print("numerical:  ", b.powers, b.ee)
