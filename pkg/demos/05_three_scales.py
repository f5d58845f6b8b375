"""
A slowest variable that swings back and forth
=============================================

Three speeds: y is fast, x hops between -1 and 1, and v drifts down while x
sits at -1 and up while x sits at 1.  The hop barriers depend on v, so x
tends to switch once v reaches the level where the barrier matches rho, and
v ends up oscillating between two crossing levels.
"""
import numpy as np

from slowfast.resonance import (barrier_rules, crossing_levels, designed_barriers,
                                empirical_period, make_three_scale, predicted_period,
                                run_three_scale)

spec = make_three_scale("designed", epsilon=0.01, rho=0.1)
print(f"eps={spec.epsilon}, rho={spec.rho}, delta={spec.delta:.3e}")

grid = np.linspace(-0.95, 0.95, 39)
R12, R21 = barrier_rules(grid, *designed_barriers(spec, grid))
levels = crossing_levels(R12, R21, spec.rho, bracket=(grid[0], grid[-1]))
T = predicted_period(*spec.A_bar, levels.v_minus, levels.v_plus)
print(f"crossing levels {levels.v_minus:.4f}, {levels.v_plus:.4f}; predicted period {T:.3f}")

run = run_three_scale(spec, 0.0, -1.0, n_steps=2 * 10**6, subsample=100, seed=0)
est = empirical_period(run.V, dt=run.times[1] - run.times[0])
print(f"{est.n_phases} phases, empirical period {est.period:.3f}")
print("V range", run.V.min().round(3), run.V.max().round(3), "|", run.n_markers, "hops of x")
