"""
Averaging a slow variable over fast noise
=========================================

The slow state x moves by eps * B(x, y) per step while y is redrawn by the
fast motion.  Over times of order 1/eps, x follows the ODE driven by the
fast average of B.
"""
import numpy as np

from slowfast import make_builtin
from slowfast.core import averaged_b1
from slowfast.simulate import averaging_error_stat, integrate_averaged, orbit

# attractors at -2, 0 and 2; the fast forcing is turned down from 50 to 2 so
# that a single slow time unit already shows the averaging
system = make_builtin("markov-sym", amplitude=2.0)
print(system.name, "eps =", system.epsilon)

# the averaged flow from x = 0.5 relaxes into the attractor at 0
path = integrate_averaged(averaged_b1, 0.5, 2.0, 0.01)
print("averaged path at t = 0, 1, 2:", path.points[[0, 100, 200]])

# one orbit over the same slow time (2 / eps steps)
xs, ys = orbit(system, 0.5, 0.1, int(2.0 / system.epsilon), seed=1)
print("orbit at t = 1, 2:", xs[1000], xs[2000])

# the gap closes as eps shrinks
for eps in (1e-2, 1e-3, 1e-4):
    st = averaging_error_stat(system.with_epsilon(eps), averaged_b1, 0.5, 1.0, 100, seed=2)
    print(f"eps={eps:g}  median sup-deviation {st.quantiles[0.5]:.4f}  "
          f"P(dev > 0.1) = {st.exceedance:.2f}")
