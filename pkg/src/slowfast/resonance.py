"""Three-scale slow/intermediate/fast systems and the resonance period.

The slowest variable v drifts at rate eps*delta, the intermediate x at rate
eps and the fast y mixes every step.  With delta = exp(-rho/eps)/eps the
intermediate motion hops between its two attractors roughly when the
current barrier R12(v) or R21(v) drops to rho, and v sweeps back and forth
between the two crossing levels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import i0e

from . import _loops
from .core import RngStream, wrap_scalar
from .errors import (
    BlowUp,
    NoRoot,
    RhoAboveMerge,
    SignViolation,
    TooFewReversals,
    ValidationError,
)
from .quasipotential import hj_root_quasipotential

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ThreeScaleSpec:
    """Rules A(v, x, y), B(v, x, y) and fast(v, x, y, u) -> y'.

    ``delta`` is derived from ``(epsilon, rho)``; ``rho = inf`` gives
    delta = 0 (the slowest variable frozen).
    """

    A: object
    B: object
    fast: object
    noisy: bool
    epsilon: float
    rho: float
    attractors: tuple = (-1.0, 1.0)
    A_bar: tuple = None
    name: str = "three-scale"
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not self.rho > 0:
            raise ValidationError(f"rho must be positive, got {self.rho}")
        if not self.delta < 1.0:
            raise ValidationError(f"delta = {self.delta:g} is not below 1; raise rho")

    @property
    def delta(self):
        if math.isinf(self.rho):
            return 0.0
        return math.exp(-self.rho / self.epsilon) / self.epsilon

    def with_rho(self, rho):
        return ThreeScaleSpec(self.A, self.B, self.fast, self.noisy, self.epsilon, float(rho),
                              self.attractors, self.A_bar, self.name, self.params)


def rho_of(epsilon, delta):
    """rho = -eps * ln(delta * eps)."""
    return -epsilon * math.log(delta * epsilon)


# ---------------------------------------------------------------------------
# built-in triples
# ---------------------------------------------------------------------------
@numba.njit(cache=True)
def _paper_A(w, x, y):
    return x * np.cos(2.0 * np.pi * w) + np.sin(2.0 * np.pi * y)


@numba.njit(cache=True)
def _paper_B(w, x, y):
    return (x - w) * (1.0 - x * x) + np.sin(2.0 * np.pi * y)


@numba.njit(cache=True)
def _paper_fast(w, x, y, u):
    return wrap_scalar(3.0 * y + x + w)


def _designed_rules(kappa, c, a, sigma):
    @numba.njit
    def A(v, x, y):
        return x * (0.5 + v * v) + a * np.sin(2.0 * np.pi * y)

    @numba.njit
    def B(v, x, y):
        s = sigma * np.tanh(v / sigma)
        return kappa * (x - s) * (1.0 - x * x) + c * np.sin(2.0 * np.pi * y)

    @numba.njit
    def fast(v, x, y, u):
        return wrap_scalar(y + x + u)

    return A, B, fast


def make_three_scale(variant="paper", epsilon=None, rho=None, kappa=0.2, c=1.0, a=0.0,
                     sigma=0.9):
    """The three-scale triples.

    ``variant="paper"``: A = x cos 2 pi w + sin 2 pi y,
    B = (x - w)(1 - x^2) + sin 2 pi y, y' = 3y + x + w mod 1.

    ``variant="designed"``: A = x (0.5 + v^2) + a sin 2 pi y,
    B = kappa (x - s(v))(1 - x^2) + c sin 2 pi y with i.i.d. uniform fast
    noise, where the separator s(v) = sigma tanh(v / sigma) stays inside
    (-1, 1) so both attractors survive any excursion of v.  The averaged A at
    the attractors -1 and +1 is -(0.5 + v^2) and +(0.5 + v^2), and the
    barriers come from the closed-form H.
    """
    if variant == "paper":
        eps = 0.01 if epsilon is None else float(epsilon)
        r = 0.1 if rho is None else float(rho)
        abar = (lambda w: -np.cos(TWO_PI * np.asarray(w)),  # at x = -1
                lambda w: np.cos(TWO_PI * np.asarray(w)))   # at x = +1
        return ThreeScaleSpec(_paper_A, _paper_B, _paper_fast, False, eps, r,
                              (-1.0, 1.0), abar, "three-scale-paper", {})
    if variant == "designed":
        eps = 0.01 if epsilon is None else float(epsilon)
        r = 0.1 if rho is None else float(rho)
        if not 0.0 < sigma < 1.0:
            raise ValidationError("sigma must lie in (0, 1)")
        A, B, fast = _designed_rules(float(kappa), float(c), float(a), float(sigma))
        abar = (lambda v: -(0.5 + np.asarray(v) ** 2), lambda v: 0.5 + np.asarray(v) ** 2)
        return ThreeScaleSpec(A, B, fast, True, eps, r, (-1.0, 1.0), abar,
                              "three-scale-designed",
                              {"kappa": float(kappa), "c": float(c), "a": float(a),
                               "sigma": float(sigma)})
    raise ValidationError(f"unknown three-scale variant {variant!r}")


# ---------------------------------------------------------------------------
# simulation
# ---------------------------------------------------------------------------
@dataclass
class ThreeScaleRun:
    """Subsampled V trace and the intermediate variable's hop markers.

    ``times`` are in the slowest clock s = eps * delta * n.
    """

    times: np.ndarray
    V: np.ndarray
    marker_steps: np.ndarray
    marker_attractor: np.ndarray
    n_markers: int
    final: tuple
    steps: int
    subsample: int


def run_three_scale(spec, v0, x0, y0=None, n_steps=10**6, subsample=100, rng=None, seed=0,
                    radius=0.25, bound=1e6, max_markers=100_000):
    """Iterate the triple; every update reads the pre-step (v, x, y)."""
    if n_steps < 1 or subsample < 1:
        raise ValueError("n_steps and subsample must be positive")
    rng = rng if rng is not None else RngStream(seed, 0)
    if y0 is None:
        y0 = 0.0 if spec.noisy else "uniform"
    y = float(rng.random()) if isinstance(y0, str) else float(y0) % 1.0
    vs = np.empty(n_steps // subsample + 1)
    vs[0] = v0
    centers = np.asarray(spec.attractors, dtype=float)
    mark_steps = np.zeros(max_markers, dtype=np.int64)
    mark_idx = np.zeros(max_markers, dtype=np.int64)
    loop = _loops.pick(_loops.three_scale_loop, spec.A, spec.B, spec.fast)
    eps, ed = spec.epsilon, spec.epsilon * spec.delta
    v, x, last, n_mark, done = float(v0), float(x0), -1, 0, 0
    block = 1 << 16
    empty = np.zeros(0)
    while done < n_steps:
        n = min(block, n_steps - done)
        us = rng.random(n) if spec.noisy else empty
        k, v, x, y, last, n_mark = loop(spec.A, spec.B, spec.fast, eps, ed, v, x, y, us,
                                        spec.noisy, n, subsample, done, vs, centers, radius,
                                        last, mark_steps, mark_idx, n_mark, bound)
        if k < 0:
            raise BlowUp(f"three-scale state left |.| <= {bound:g} at step {done - k}")
        done += n
    keep = min(n_mark, max_markers)
    times = np.arange(len(vs)) * subsample * ed
    return ThreeScaleRun(times, vs, mark_steps[:keep].copy(), mark_idx[:keep].copy(), n_mark,
                         (v, x, y), n_steps, subsample)


# ---------------------------------------------------------------------------
# barriers of the frozen intermediate motion
# ---------------------------------------------------------------------------
class _FrozenIidRates:
    """Closed-form H(x, beta) = beta b(x) + log I0(c beta) for the designed triple."""

    def __init__(self, b, c, b_max):
        self.b, self.c, self.b_max = b, c, b_max

    def bbar(self, x):
        return float(self.b(x))

    def H_exact(self, x, beta):
        z = abs(self.c * beta)
        return float(beta * self.b(x) + math.log(i0e(z)) + z)


def designed_barriers(spec, v_grid, n_cells=200):
    """R12(v) (climb from -1 to the separator s(v)) and R21(v) (from +1 down)."""
    kappa, c, sigma = spec.params["kappa"], spec.params["c"], spec.params["sigma"]
    r12, r21 = [], []
    for v in np.asarray(v_grid, dtype=float):
        s = sigma * math.tanh(v / sigma)
        rates = _FrozenIidRates(lambda x, s=s: kappa * (x - s) * (1.0 - x * x), c, 60.0 / c)
        r12.append(hj_root_quasipotential(rates, -1.0, s, n_cells))
        r21.append(hj_root_quasipotential(rates, 1.0, s, n_cells))
    return np.array(r12), np.array(r21)


def barrier_rules(v_grid, r12, r21):
    """Monotone cubic interpolants of tabulated barrier curves."""
    return PchipInterpolator(v_grid, r12), PchipInterpolator(v_grid, r21)


# ---------------------------------------------------------------------------
# crossing levels and the period
# ---------------------------------------------------------------------------
@dataclass
class CrossingLevels:
    v_minus: float
    v_plus: float
    lambda_star: float
    v_star: float
    valid: bool


def _root(f, lo, hi, tol=1e-10):
    flo, fhi = f(lo), f(hi)
    if flo == 0.0:
        return lo
    if fhi == 0.0:
        return hi
    if flo * fhi > 0:
        raise NoRoot(f"no sign change on [{lo:g}, {hi:g}]")
    while hi - lo > tol:
        m = 0.5 * (lo + hi)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (flo < 0):
            lo, flo = m, fm
        else:
            hi = m
    return 0.5 * (lo + hi)


def crossing_levels(R12, R21, rho, bracket=(-1.0, 1.0), n_check=201):
    """Solve R12(v_minus) = rho and R21(v_plus) = rho by bisection to 1e-10.

    R12 must increase and R21 decrease on ``bracket`` (checked on a grid).
    The merge level lambda* is the common value where the curves cross.
    """
    lo, hi = map(float, bracket)
    g = np.linspace(lo, hi, n_check)
    a = np.array([float(R12(v)) for v in g])
    b = np.array([float(R21(v)) for v in g])
    if np.any(np.diff(a) < -1e-12) or np.any(np.diff(b) > 1e-12):
        raise NoRoot("R12 must increase and R21 decrease on the bracket")
    v_star = _root(lambda v: float(R12(v)) - float(R21(v)), lo, hi)
    lam = float(R12(v_star))
    if rho > lam + 1e-12:
        raise RhoAboveMerge(f"rho={rho:g} exceeds the merge level {lam:.6g}")
    vm = _root(lambda v: float(R12(v)) - rho, lo, v_star)
    vp = _root(lambda v: float(R21(v)) - rho, v_star, hi)
    return CrossingLevels(vm, vp, lam, v_star, vm <= vp)


def _trapezoid(f, a, b, rtol=1e-8, max_level=24):
    n = 1
    xs = np.array([a, b])
    fx = f(xs)
    est = 0.5 * (b - a) * (fx[0] + fx[1])
    for _ in range(max_level):
        h = (b - a) / n
        mids = a + h * (np.arange(n) + 0.5)
        fm = f(mids)
        new = 0.5 * est + 0.5 * h * np.sum(fm)
        n *= 2
        xs = np.concatenate([xs, mids])
        fx = np.concatenate([fx, fm])
        if abs(new - est) <= rtol * abs(new):
            return new, xs, fx
        est = new
    return est, xs, fx


def predicted_period(A1bar, A2bar, v_minus, v_plus, rtol=1e-8):
    """T = int dv/|A1bar| + int dv/|A2bar| over [v_minus, v_plus].

    Refines the trapezoid rule by interval halving until successive estimates
    agree to ``rtol``.  Requires A1bar < 0 and A2bar > 0 on the interval.
    """
    if v_plus == v_minus:
        return 0.0
    a, b = sorted((float(v_minus), float(v_plus)))
    probe = np.linspace(a, b, 257)
    if np.any(np.asarray(A1bar(probe)) >= 0) or np.any(np.asarray(A2bar(probe)) <= 0):
        raise SignViolation("need A1bar < 0 and A2bar > 0 on [v_minus, v_plus]")
    total = 0.0
    for Ab, sign in ((A1bar, -1.0), (A2bar, 1.0)):
        val, xs, fx = _trapezoid(lambda v, Ab=Ab: 1.0 / np.abs(np.asarray(Ab(v), dtype=float)),
                                 a, b, rtol)
        if np.any(sign * np.asarray(Ab(xs)) <= 0):
            raise SignViolation("averaged slow drift changes sign inside the interval")
        total += val
    return float(total)


@dataclass
class PeriodEstimate:
    period: float
    n_phases: int
    reversal_times: np.ndarray
    directions: np.ndarray

    def __iter__(self):
        return iter((self.period, self.n_phases))


def empirical_period(trace, dt=1.0, window=None):
    """Period of a back-and-forth trace from its direction reversals.

    The trace is smoothed with a moving average of 1% of its length; a
    reversal is a sign change of the smoothed difference over one window,
    placed at the window centre.  Flip pairs closer than a window are
    treated as noise.  Period = mean gap between same-direction reversals.
    ``directions`` is +1 at a maximum, -1 at a minimum.
    """
    v = np.asarray(trace, dtype=float)
    if window is None:
        window = max(1, int(round(0.01 * len(v))))
    if len(v) < 3 * window + 2:
        raise TooFewReversals("trace too short for the smoothing window")
    s = np.convolve(v, np.ones(window) / window, mode="valid")
    d = s[window:] - s[:-window]
    sg = np.sign(d)
    # carry the last nonzero sign over flat stretches
    nz = np.flatnonzero(sg)
    if len(nz) == 0:
        raise TooFewReversals("flat trace")
    idx = np.maximum.accumulate(np.where(sg != 0, np.arange(len(sg)), 0))
    sg = sg[idx]
    sg[: nz[0]] = sg[nz[0]]
    flips = list(np.flatnonzero(sg[1:] != sg[:-1]) + 1)
    kept = []
    for f in flips:
        if kept and f - kept[-1] < window:
            kept.pop()
        else:
            kept.append(f)
    if len(kept) < 3:
        raise TooFewReversals(f"only {len(kept)} direction reversals found")
    kept = np.array(kept)
    centre = (window - 1) / 2.0 + window / 2.0
    times = (kept - 0.5 + centre) * dt
    dirs = np.where(sg[kept - 1] > 0, 1, -1)
    gaps = [times[k + 2] - times[k] for k in range(len(times) - 2)]
    return PeriodEstimate(float(np.mean(gaps)), len(kept) + 1, times, dirs)
