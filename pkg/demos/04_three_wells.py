"""
Which well wins?
================

With several wells, long-run occupation is set by sums of barriers over
i-graphs.  Here a quintic drift has attractors near -2, 0 and 2 with
unequal barriers; we compare the predicted shares with a long chain of
well-to-well hops.
"""
import numpy as np

from slowfast.core import make_polynomial
from slowfast.quasipotential import find_attractors, igraph_weights, transition_matrix
from slowfast.rate import RateModel
from slowfast.simulate import transition_sequence

# -0.015 (x+2)(x+1.1) x (x-1.2)(x-2), expanded, plus sin 2 pi y
coeffs = [0.0, -0.0792, -0.006, 0.0798, 0.0015, -0.015]
system = make_polynomial(coeffs, amplitude=1.0, epsilon=0.04)
rates = RateModel(system, n_y=128)
wells = find_attractors(rates.bbar, system.slow_domain)
print("attractors", np.round(wells.attractors, 4))

R = transition_matrix(wells, rates, "hj").R
print("barrier matrix\n", np.round(R, 4))
Q = igraph_weights(R, system.epsilon)
print("predicted shares", np.round(Q.prediction, 3))

log = transition_sequence(system, wells.attractors, 0.25, 300, 0.0, seed=3)
shares = log.time_fractions(wells.ell)
shares = shares / shares.sum()
print("simulated shares", np.round(shares, 3), "over", len(log.entries), "hops")
# agreement is only claimed at exponential order: eps * log of share ratios
err = system.epsilon * np.abs(np.log(shares[:, None] / shares) - np.log(Q.prediction[:, None] / Q.prediction))
print("largest eps * |log-ratio error|:", err.max().round(4))
