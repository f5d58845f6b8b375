"""Rate-function ladder on a circle grid: mu^x, Bbar, H, L, I and the action S.

All fast-variable integrals use the periodic trapezoid rule on the nodes
y_i = i/n_y.  For Markov drivers the transition operator is the n_y x n_y
row-stochastic matrix P(x); the cumulant H is the log Perron root of the
tilted matrix P(x) diag(exp(beta*B(x', y_j))).  For expanding drivers
y -> m*y + c(x) the weighted transfer operator

    (L u)(y) = sum over preimages v of y of (1/m) exp(beta*B(x', v)) u(v)

is discretised by evaluating u at the (off-grid) preimages with periodic
trigonometric interpolation, which is spectrally accurate for the smooth
built-in drifts.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .core import AdditiveNoiseDriver, ExpandingDriver, KernelDriver, wrap
from .errors import BetaOutOfBracket, NoConvergence, OutOfTableRange

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
DEFAULT_NY = 512
DEFAULT_NBETA = 241


# ---------------------------------------------------------------------------
# grid measures
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GridMeasure:
    density: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.density, dtype=float)
        if np.any(d < -1e-12):
            raise ValueError("a grid measure needs a nonnegative density")
        object.__setattr__(self, "density", d)

    @property
    def n_y(self):
        return len(self.density)

    @property
    def delta(self):
        return 1.0 / self.n_y

    @property
    def nodes(self):
        return np.arange(self.n_y) / self.n_y

    @property
    def masses(self):
        return self.density * self.delta

    def integrate(self, f_values):
        return float(np.dot(self.density, f_values) * self.delta)

    @classmethod
    def from_masses(cls, masses):
        m = np.clip(np.asarray(masses, dtype=float), 0.0, None)
        m = m / m.sum()
        return cls(m * len(m))

    @classmethod
    def uniform(cls, n_y):
        return cls(np.ones(n_y))


def grid_nodes(n_y):
    return np.arange(n_y) / n_y


def _eval_drift(system, x, ys):
    ys = np.asarray(ys, dtype=float)
    vals = system.drift.rule(np.full_like(ys, float(x)), ys)
    return np.asarray(vals, dtype=float) * np.ones_like(ys)


# ---------------------------------------------------------------------------
# discretised operators
# ---------------------------------------------------------------------------
def periodic_sinc(t, n):
    """Trigonometric interpolation kernel for n equispaced nodes on [0, 1)."""
    t = np.asarray(t, dtype=float)
    t = t - np.round(t)
    s = np.sin(math.pi * n * t)
    if n % 2 == 0:
        den = n * np.tan(math.pi * t)
    else:
        den = n * np.sin(math.pi * t)
    small = np.abs(t) < 1e-14
    out = np.where(small, 1.0, s / np.where(small, 1.0, den))
    return out


def markov_matrix(driver, x, n_y):
    """Row-stochastic grid transition matrix of a Markov driver at slow state x."""
    if isinstance(driver, KernelDriver):
        return np.asarray(driver.kernel(x, n_y), dtype=float)
    if isinstance(driver, AdditiveNoiseDriver):
        ys = grid_nodes(n_y)
        shift = float(driver.coupling(x))
        if driver.is_uniform:
            return np.full((n_y, n_y), 1.0 / n_y)
        z = ys[None, :] - ys[:, None] - shift
        P = driver.noise_pdf(z) / n_y
        return P / P.sum(axis=1, keepdims=True)
    raise TypeError(f"{type(driver).__name__} is not a Markov driver")


class _Family:
    """Tilted operators beta -> K_beta at fixed (x, x', n_y)."""

    def __init__(self, system, x, x_prime, n_y):
        self.system = system
        self.n_y = n_y
        self.x = float(x)
        self.x_prime = float(x if x_prime is None else x_prime)
        drv = system.driver
        ys = grid_nodes(n_y)
        if isinstance(drv, ExpandingDriver):
            self.kind = "expanding"
            m = int(drv.multiplier)
            c = float(drv.coupling(self.x))
            pre = wrap((ys[:, None] - c + np.arange(m)[None, :]) / m)  # (n_y, m)
            self.pre = pre
            self.S = [periodic_sinc(pre[:, j][:, None] - ys[None, :], n_y) / m
                      for j in range(m)]
            self.Bw = np.stack([_eval_drift(system, self.x_prime, pre[:, j])
                                for j in range(m)])
        else:
            self.kind = "markov"
            self.P = markov_matrix(drv, self.x, n_y)
            self.Bw = _eval_drift(system, self.x_prime, ys)
        self.B_nodes = _eval_drift(system, self.x_prime, ys)

    def matrix(self, beta):
        """Return (K, shift) with K the tilted matrix scaled by exp(-shift)."""
        a = beta * self.Bw
        shift = float(np.max(a))
        w = np.exp(a - shift)
        if self.kind == "markov":
            return self.P * w[None, :], shift
        K = self.S[0] * w[0][:, None]
        for j in range(1, len(self.S)):
            K = K + self.S[j] * w[j][:, None]
        return K, shift

    def untilted(self):
        if self.kind == "markov":
            return self.P
        return sum(self.S)


def _power(K, v0, tol, max_iter, transpose=False):
    """Perron root and vector of K (or K^T) by power iteration.

    Stops when the relative residual ||Kv - lambda v|| / ||lambda v|| < tol.
    """
    A = K.T if transpose else K
    v = np.asarray(v0, dtype=float)
    v = v / np.sum(v)
    lam = 0.0
    best = math.inf
    for _ in range(max_iter):
        w = A @ v
        lam = float(np.sum(w))
        if not (lam > 0 and math.isfinite(lam)):
            raise NoConvergence("power iteration lost positivity")
        res = float(np.max(np.abs(w - lam * v)) / (abs(lam) * np.max(np.abs(v))))
        v = w / lam
        best = min(best, res)
        if res < tol:
            return lam, v, res
    if best > 1e-8:
        raise NoConvergence(f"power iteration stalled at residual {best:.3g}")
    return lam, v, best


_FAMILY_CACHE: "OrderedDict[tuple, _Family]" = OrderedDict()


def _family(system, x, x_prime, n_y):
    key = (id(system), float(x), None if x_prime is None else float(x_prime), int(n_y))
    fam = _FAMILY_CACHE.get(key)
    if fam is not None and fam.system is system:
        _FAMILY_CACHE.move_to_end(key)
        return fam
    fam = _Family(system, x, x_prime, n_y)
    _FAMILY_CACHE[key] = fam
    if len(_FAMILY_CACHE) > 16:
        _FAMILY_CACHE.popitem(last=False)
    return fam


# ---------------------------------------------------------------------------
# invariant measure and averaged drift
# ---------------------------------------------------------------------------
def stationary_density(driver_or_system, x, n_y=DEFAULT_NY, tol=1e-12, max_iter=20000):
    """Invariant density of the frozen fast motion at slow state x.

    Markov drivers: left Perron vector of P(x).  Expanding drivers: fixed
    point of the discretised Perron-Frobenius operator.  The iteration starts
    from a point mass blended with the uniform density, so a non-mixing
    kernel shows up as a stalled residual (:class:`NoConvergence`).
    """
    driver = getattr(driver_or_system, "driver", driver_or_system)
    start = np.ones(n_y)
    start[0] += n_y
    if isinstance(driver, ExpandingDriver):
        m = int(driver.multiplier)
        ys = grid_nodes(n_y)
        pre = wrap((ys[:, None] - float(driver.coupling(x)) + np.arange(m)[None, :]) / m)
        L0 = sum(periodic_sinc(pre[:, j][:, None] - ys[None, :], n_y) / m for j in range(m))
        _, v, _ = _power(L0, start, tol, max_iter)
    else:
        P = markov_matrix(driver, x, n_y)
        _, v, _ = _power(P, start, tol, max_iter, transpose=True)
    return GridMeasure.from_masses(v)


def averaged_drift(system, x, n_y=DEFAULT_NY, mu=None):
    """Bbar(x) = integral of B(x, y) against mu^x on the grid."""
    if mu is None:
        mu = stationary_density(system.driver, x, n_y)
    return mu.integrate(_eval_drift(system, x, mu.nodes))


# ---------------------------------------------------------------------------
# cumulant H
# ---------------------------------------------------------------------------
def _check_beta(system, beta, b_max):
    b_max = system.beta_max if b_max is None else b_max
    if abs(beta) > b_max * (1 + 1e-12):
        raise BetaOutOfBracket(f"|beta|={abs(beta):g} exceeds b_max={b_max:g}")


def tilted_eigen(system, x, beta, n_y=DEFAULT_NY, x_prime=None, left=False,
                 tol=1e-12, max_iter=20000):
    """(H, right vector[, left vector]) of the tilted operator at beta."""
    fam = _family(system, x, x_prime, n_y)
    K, shift = fam.matrix(beta)
    lam, r, _ = _power(K, np.ones(n_y), tol, max_iter)
    H = math.log(lam) + shift
    if not left:
        return H, r
    _, l, _ = _power(K, np.ones(n_y), tol, max_iter, transpose=True)
    return H, r, l


def log_mgf_H(system, x, beta, x_prime=None, n_y=DEFAULT_NY, b_max=None):
    """Limiting normalised log-moment-generating function H(x, x', beta).

    Markov drivers: log principal eigenvalue of the tilted grid kernel.
    Expanding drivers: topological pressure of beta*B - log m, i.e. the log
    principal eigenvalue of the weighted transfer operator.
    """
    _check_beta(system, beta, b_max)
    if beta == 0.0:
        return 0.0
    H, _ = tilted_eigen(system, x, float(beta), n_y, x_prime)
    return H


def H_closed_form(system, x, betas, x_prime=None, n_y=DEFAULT_NY):
    """H for drivers whose fast states are i.i.d. uniform: log mean exp(beta*B)."""
    xp = float(x if x_prime is None else x_prime)
    B = _eval_drift(system, xp, grid_nodes(n_y))
    a = np.multiply.outer(np.atleast_1d(np.asarray(betas, dtype=float)), B)
    amax = a.max(axis=1, keepdims=True)
    return (np.log(np.mean(np.exp(a - amax), axis=1)) + amax[:, 0]).reshape(np.shape(betas))


def provenance(system):
    drv = system.driver
    if isinstance(drv, ExpandingDriver):
        return "transfer-pressure"
    if isinstance(drv, AdditiveNoiseDriver) and drv.is_uniform:
        return "iid-closed-form"
    return "markov-eigen"


def H_curve(system, x, betas, n_y=DEFAULT_NY, x_prime=None, method="auto"):
    """H on an array of betas, sharing the operator set-up across them."""
    betas = np.asarray(betas, dtype=float)
    if method == "auto" and provenance(system) == "iid-closed-form":
        return H_closed_form(system, x, betas, x_prime, n_y)
    out = np.empty(betas.shape)
    v = np.ones(n_y)
    fam = _family(system, x, x_prime, n_y)
    for i, b in np.ndenumerate(betas):
        if b == 0.0:
            out[i] = 0.0
            continue
        K, shift = fam.matrix(b)
        lam, v, _ = _power(K, np.clip(v, 1e-300, None) if fam.kind == "markov" else v,
                           1e-12, 20000)
        out[i] = math.log(lam) + shift
    return out


# ---------------------------------------------------------------------------
# Legendre transform
# ---------------------------------------------------------------------------
@dataclass
class LegendreResult:
    """L values with a tagged infinity.

    Where ``finite`` is False the true value is +infinity and ``value`` holds
    the lower bound attained at the bracket edge.
    """

    value: np.ndarray
    beta_star: np.ndarray
    finite: np.ndarray

    def __iter__(self):
        return iter((self.value, self.beta_star, self.finite))

    def __float__(self):
        return float(self.value) if bool(np.all(self.finite)) else math.inf


def _as_H_rule(H):
    if isinstance(H, RateTable):
        return H.H_rule(), H.beta_grid[-1]
    return H, None


def legendre_L(H, alpha, b_max=None, tol=1e-10, edge_h=1e-6):
    """L(alpha) = sup_beta (alpha*beta - H(beta)) over |beta| <= b_max.

    ``H`` is a :class:`RateTable` or a vectorised callable.  The concave
    objective is maximised by golden-section search (all alphas in lockstep);
    a maximiser pinned to the bracket edge with the slope still pointing
    outwards yields the +infinity sentinel.
    """
    rule, tb = _as_H_rule(H)
    b_max = tb if b_max is None else b_max
    if b_max is None:
        raise ValueError("b_max is required with a callable H")
    alpha = np.asarray(alpha, dtype=float)
    a = np.atleast_1d(alpha).astype(float)
    lo = np.full(a.shape, -b_max)
    hi = np.full(a.shape, b_max)
    g = lambda b: a * b - rule(b)  # noqa: E731
    c = hi - GOLDEN * (hi - lo)
    d = lo + GOLDEN * (hi - lo)
    gc, gd = g(c), g(d)
    while np.max(hi - lo) > tol:
        left = gc >= gd
        # left: keep [lo, d]; else keep [c, hi]
        hi = np.where(left, d, hi)
        lo = np.where(left, lo, c)
        nc = np.where(left, hi - GOLDEN * (hi - lo), d)
        nd = np.where(left, c, lo + GOLDEN * (hi - lo))
        gnc = np.where(left, g(nc), gd)
        gnd = np.where(left, gc, g(nd))
        c, d, gc, gd = nc, nd, gnc, gnd
    bs = 0.5 * (lo + hi)
    # compare with the bracket edges explicitly
    ge_lo, ge_hi, gm = g(np.full(a.shape, -b_max)), g(np.full(a.shape, b_max)), g(bs)
    val = np.maximum(gm, np.maximum(ge_lo, ge_hi))
    bs = np.where(val == ge_hi, b_max, np.where(val == ge_lo, -b_max, bs))
    slope_hi = a - (rule(np.full(a.shape, b_max)) - rule(np.full(a.shape, b_max - edge_h))) / edge_h
    slope_lo = a - (rule(np.full(a.shape, -b_max + edge_h)) - rule(np.full(a.shape, -b_max))) / edge_h
    pinned_hi = (bs >= b_max - 1e3 * tol) & (slope_hi > 0)
    pinned_lo = (bs <= -b_max + 1e3 * tol) & (slope_lo < 0)
    finite = ~(pinned_hi | pinned_lo)
    shape = alpha.shape
    return LegendreResult(val.reshape(shape), bs.reshape(shape), finite.reshape(shape))


# ---------------------------------------------------------------------------
# rate tables
# ---------------------------------------------------------------------------
@dataclass
class RateTable:
    x: float
    beta_grid: np.ndarray
    H_values: np.ndarray
    bbar: float
    alpha_grid: np.ndarray
    L_values: np.ndarray
    beta_star: np.ndarray
    L_finite: np.ndarray
    provenance: str
    _spline: object = field(default=None, repr=False, compare=False)

    def H_rule(self):
        if self._spline is None:
            self._spline = CubicSpline(self.beta_grid, self.H_values)
        return self._spline

    def H(self, beta):
        return self.H_rule()(beta)

    def L(self, alpha):
        return legendre_L(self, alpha)


def rate_table(system, x, n_y=DEFAULT_NY, b_max=None, n_beta=DEFAULT_NBETA,
               alpha_grid=None, n_alpha=201, method="auto"):
    """H on a symmetric beta grid, Bbar, and L on an alpha grid at slow state x."""
    b_max = system.beta_max if b_max is None else float(b_max)
    betas = np.linspace(-b_max, b_max, n_beta)
    Hv = H_curve(system, x, betas, n_y, method=method)
    Hv[n_beta // 2] = 0.0 if n_beta % 2 else Hv[n_beta // 2]
    bbar = averaged_drift(system, x, n_y)
    if alpha_grid is None:
        K = system.drift.bound
        alpha_grid = np.linspace(-K, K, n_alpha)
    prov = provenance(system)
    if method != "auto" and prov == "iid-closed-form":
        prov = "markov-eigen"
    tab = RateTable(float(x), betas, Hv, bbar, np.asarray(alpha_grid, dtype=float),
                    None, None, None, prov)
    Lr = legendre_L(tab, tab.alpha_grid)
    tab.L_values, tab.beta_star, tab.L_finite = Lr.value, Lr.beta_star, Lr.finite
    return tab


class RateModel:
    """Lazily built rate tables over the slow domain of a system.

    ``L(x, alpha)`` and ``H(x, beta)`` use the cached table at exactly ``x``;
    ``H_exact`` recomputes H from the operator.
    """

    def __init__(self, system, n_y=256, b_max=None, n_beta=DEFAULT_NBETA, domain=None,
                 max_tables=100_000):
        self.system = system
        self.n_y = n_y
        self.b_max = system.beta_max if b_max is None else float(b_max)
        self.n_beta = n_beta
        self.domain = tuple(system.slow_domain if domain is None else domain)
        self._tables = {}
        self.max_tables = max_tables

    def _check(self, x):
        lo, hi = self.domain
        if not (lo - 1e-12 <= x <= hi + 1e-12):
            raise OutOfTableRange(f"x={x:g} outside rate-table range [{lo:g}, {hi:g}]")

    def table(self, x):
        x = float(x)
        self._check(x)
        t = self._tables.get(x)
        if t is None:
            b = np.linspace(-self.b_max, self.b_max, self.n_beta)
            Hv = H_curve(self.system, x, b, self.n_y)
            t = RateTable(x, b, Hv, math.nan, np.zeros(0), np.zeros(0), np.zeros(0),
                          np.zeros(0, dtype=bool), provenance(self.system))
            if len(self._tables) >= self.max_tables:
                self._tables.clear()
            self._tables[x] = t
        return t

    def H(self, x, beta):
        return self.table(x).H(beta)

    def H_exact(self, x, beta):
        self._check(float(x))
        if provenance(self.system) == "iid-closed-form":
            return float(H_closed_form(self.system, x, float(beta), n_y=self.n_y))
        return log_mgf_H(self.system, x, float(beta), n_y=self.n_y, b_max=self.b_max)

    def L(self, x, alpha):
        return legendre_L(self.table(x), alpha)

    def bbar(self, x):
        self._check(float(x))
        return averaged_drift(self.system, x, self.n_y)


# ---------------------------------------------------------------------------
# twisted measures and the Donsker-Varadhan functional
# ---------------------------------------------------------------------------
def twisted_measure(system, x, beta, n_y=DEFAULT_NY):
    """Tilted invariant measure mu_beta with its mean drift and I-value.

    mu_beta has masses proportional to (left Perron vector) * (right Perron
    vector) of the tilted operator; its B-mean is dH/dbeta and
    I = beta*mean - H.
    """
    fam = _family(system, x, None, n_y)
    if beta == 0.0:
        mu = stationary_density(system.driver, x, n_y)
        return mu, mu.integrate(fam.B_nodes), 0.0
    H, r, l = tilted_eigen(system, x, float(beta), n_y, left=True)
    mu = GridMeasure.from_masses(l * r)
    mean = mu.integrate(fam.B_nodes)
    return mu, mean, float(beta * mean - H)


def dv_objective(P, masses, phi):
    """sum_i m_i (phi_i - log (P e^phi)_i), the DV lower-bound functional."""
    pm = np.max(phi)
    Pu = P @ np.exp(phi - pm)
    return float(np.dot(masses, phi - pm - np.log(Pu)))


def dv_rate_I(system, x, mu, n_y=None, tol=1e-8, max_iter=200_000):
    """Donsker-Varadhan rate I_x(mu) = sup_u integral of log(u / P u) dmu.

    Maximises the concave objective over phi = log u (gauge phi_0 = 0) by
    gradient ascent with Barzilai-Borwein steps and Armijo backtracking until
    the gradient norm drops below ``tol``.  Markov drivers only.
    """
    if isinstance(system.driver, ExpandingDriver):
        raise TypeError("the DV functional is computed for Markov drivers only")
    n_y = mu.n_y if n_y is None else n_y
    if n_y != mu.n_y:
        raise ValueError("mu must live on the kernel grid")
    P = markov_matrix(system.driver, x, n_y)
    m = mu.masses / mu.masses.sum()
    PT = P.T

    def value_grad(phi):
        pm = np.max(phi)
        e = np.exp(phi - pm)
        Pu = P @ e
        val = float(np.dot(m, phi - pm - np.log(Pu)))
        grad = m - e * (PT @ (m / Pu))
        grad[0] = 0.0
        return val, grad

    phi = np.zeros(n_y)
    with np.errstate(divide="ignore"):
        init = np.log(np.where(m > 0, m, 1e-300) * n_y)
    phi = init - init[0]
    val, g = value_grad(phi)
    step = 1.0 * n_y
    prev_phi = prev_g = None
    for _ in range(max_iter):
        gn = float(np.linalg.norm(g))
        if gn < tol:
            return max(val, 0.0)
        if prev_g is not None:
            s, yv = phi - prev_phi, g - prev_g
            sy = float(np.dot(s, yv))
            if sy < 0:
                step = float(np.dot(s, s)) / -sy
        t = step
        while True:
            cand = phi + t * g
            cv, cg = value_grad(cand)
            if cv >= val + 1e-4 * t * gn * gn or t < 1e-20:
                break
            t *= 0.5
        prev_phi, prev_g = phi, g
        phi, val, g = cand, cv, cg
    raise NoConvergence(f"DV ascent stopped with gradient norm {np.linalg.norm(g):.3g}")


# ---------------------------------------------------------------------------
# path action
# ---------------------------------------------------------------------------
@dataclass
class ActionValue:
    total: float
    finite: bool
    segments: np.ndarray
    segment_finite: np.ndarray

    @property
    def value(self):
        return self.total if self.finite else math.inf


def path_action(rates, path):
    """S(path) = sum over segments of dt * L(x_mid, dx/dt) (midpoint rule)."""
    t, p = path.times, path.points
    dt = np.diff(t)
    speed = np.diff(p) / dt
    mids = 0.5 * (p[1:] + p[:-1])
    seg = np.empty(len(dt))
    fin = np.empty(len(dt), dtype=bool)
    for k in range(len(dt)):
        r = rates.L(mids[k], speed[k])
        seg[k] = float(r.value) * dt[k]
        fin[k] = bool(r.finite)
    finite = bool(np.all(fin))
    total = float(np.sum(seg[fin])) if finite else float(np.sum(seg))
    return ActionValue(total, finite, seg, fin)
