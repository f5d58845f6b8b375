"""
Escaping a well
===============

For the double well kappa x (1 - x^2) + sin 2 pi y the cost of climbing from
-1 to the separator at 0 is the quasipotential barrier R.  Mean exit times
grow like exp(R / eps).
"""
import math

import numpy as np

from slowfast import make_builtin
from slowfast.quasipotential import find_attractors, hj_root_quasipotential, transition_matrix
from slowfast.rate import RateModel
from slowfast.simulate import exit_scaling_fit, exit_times

system = make_builtin("iid-bessel", kappa=0.1)
rates = RateModel(system)
wells = find_attractors(system.params["bbar"], system.slow_domain)
print("attractors", wells.attractors, "separator", wells.separators)

R_dp = transition_matrix(wells, rates, "dp").R[0, 1]
R_hj = hj_root_quasipotential(rates, -1.0, 0.0)
print(f"barrier: dynamic programming {R_dp:.5f}, momentum root {R_hj:.5f}")

samples = []
for inv in (20, 30, 40):
    eps = 1 / inv
    batch = exit_times(system.with_epsilon(eps), -1.0, (-2.0, 0.0), 200,
                       cap_slow_time=100 * math.exp(R_dp / eps), seed=1)
    samples += batch
    print(f"eps=1/{inv}: mean exit time {np.mean([s.tau_slow for s in batch]):9.2f}")

fit = exit_scaling_fit(samples)
print(f"log(mean tau) vs 1/eps: slope {fit.slope:.4f} (barrier {R_dp:.4f}), r2 {fit.r2:.4f}")
