"""
Cumulants, their Legendre transforms, and occupation rates
==========================================================

H(x, beta) is the growth rate of E exp(beta * sum of B) along the frozen
fast motion.  Its Legendre transform L(x, alpha) prices a slow velocity
alpha; L vanishes at the averaged drift and nowhere else.
"""
import numpy as np
from scipy.special import i0

from slowfast import make_builtin
from slowfast.rate import RateModel, dv_rate_I, log_mgf_H, twisted_measure

iid = make_builtin("iid-bessel")  # B = 0.1 x (1 - x^2) + sin 2 pi y, y i.i.d. uniform
for beta in (0.5, 1.0, 2.0):
    print(f"beta={beta}:  H = {log_mgf_H(iid, 0.0, beta):.10f}   log I0 = {np.log(i0(beta)):.10f}")

rates = RateModel(iid)
x = 0.5
print("averaged drift at x=0.5:", rates.bbar(x))
for alpha in (-0.5, 0.0, rates.bbar(x), 0.5, 0.99):
    r = rates.L(x, alpha)
    print(f"  L({alpha:+.4f}) = {float(r.value):.6f}" + ("" if r.finite else "  (beyond reach)"))

# the expanding example uses a transfer operator instead of an eigenvector of a kernel
exp_sym = make_builtin("expanding-sym")
print("pressure at beta = 0.05:", log_mgf_H(exp_sym, 0.5, 0.05))

# twisted measures realise L; the Donsker-Varadhan rate of the twisted law agrees
mu, mean, I = twisted_measure(iid, 0.3, 1.5, n_y=128)
print(f"twisted mean {mean:.5f}  I from H {I:.8f}  I from DV {dv_rate_I(iid, 0.3, mu):.8f}")
