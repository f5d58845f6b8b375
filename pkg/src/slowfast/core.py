"""System specifications, validation, built-in examples and random streams.

A system is the discrete-time pair

    x' = x + eps * B(x, y)
    y' = F_x(y)            (deterministic expanding map, or a Markov step)

with the fast state y living on the unit circle [0, 1).  Drift and coupling
rules are plain callables ``rule(x, y)`` / ``coupling(x)`` that broadcast over
numpy arrays.  Rules compiled with :func:`numba.njit` are additionally run
inside compiled simulation loops; anything else falls back to an interpreted
loop with identical arithmetic.
"""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Union

import numba
import numpy as np

from .errors import (
    BadEpsilon,
    BoundViolated,
    NegativeDensity,
    NonStochasticRow,
    UnknownName,
    ValidationError,
)

TWO_PI = 2.0 * math.pi
ROW_TOL = 1e-9
PROBE_N = 64


def wrap(y):
    """Reduce ``y`` modulo 1 onto [0, 1), guarding the ``-tiny % 1 == 1`` case."""
    r = np.mod(y, 1.0)
    if np.ndim(r) == 0:
        return 0.0 if r >= 1.0 else float(r)
    r[r >= 1.0] = 0.0
    return r


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class DriftSpec:
    rule: Callable
    bound: float
    lipschitz: float = math.nan

    def __call__(self, x, y):
        return self.rule(x, y)


@dataclass(frozen=True)
class ExpandingDriver:
    """y' = m*y + c(x) mod 1."""

    multiplier: int
    coupling: Callable


@dataclass(frozen=True)
class AdditiveNoiseDriver:
    """y' = y + c(x) + xi mod 1 with xi drawn from a piecewise-constant density.

    ``density`` holds the density value on each of ``len(density)`` equal bins
    of [0, 1).
    """

    density: np.ndarray
    coupling: Callable

    @property
    def n_noise(self):
        return len(self.density)

    @functools.cached_property
    def is_uniform(self):
        return bool(np.all(self.density == self.density[0]))

    @functools.cached_property
    def cdf(self):
        c = np.concatenate([[0.0], np.cumsum(self.density) / self.n_noise])
        c /= c[-1]
        return c

    def noise_pdf(self, z):
        """Density of xi at circle points ``z`` (piecewise constant)."""
        idx = np.floor(wrap(np.asarray(z, dtype=float)) * self.n_noise).astype(int)
        return self.density[np.clip(idx, 0, self.n_noise - 1)]


@dataclass(frozen=True)
class KernelDriver:
    """Markov driver given by a grid transition matrix.

    ``kernel(x, n_y)`` returns an ``n_y x n_y`` row-stochastic matrix whose
    entry ``[i, j]`` is the probability of moving from node ``i/n_y`` to node
    ``j/n_y``.  Simulation runs on the ``n_y``-node grid of this driver.
    """

    kernel: Callable
    n_y: int = 64


FastDriver = Union[ExpandingDriver, AdditiveNoiseDriver, KernelDriver]


@dataclass(frozen=True)
class SystemSpec:
    drift: DriftSpec
    driver: FastDriver
    epsilon: float
    slow_domain: tuple
    name: str = "custom"
    beta_max: float = 6.0
    params: dict = field(default_factory=dict, compare=False)

    @property
    def is_markov(self):
        return not isinstance(self.driver, ExpandingDriver)

    def with_epsilon(self, epsilon):
        return replace(self, epsilon=float(epsilon))

    def B(self, x, y):
        return self.drift.rule(x, y)


@dataclass(frozen=True)
class PiecewisePath:
    times: np.ndarray
    points: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        p = np.asarray(self.points, dtype=float)
        if t.ndim != 1 or len(t) < 2 or len(p) != len(t):
            raise ValueError("a path needs at least two (time, point) pairs")
        if np.any(np.diff(t) <= 0):
            raise ValueError("path times must be strictly increasing")
        if not np.all(np.isfinite(p)):
            raise ValueError("path points must be finite")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "points", p)

    @property
    def T(self):
        return self.times[-1] - self.times[0]

    def __call__(self, t):
        return np.interp(t, self.times, self.points)

    def refined(self, factor=2):
        """Same polyline with every segment split into ``factor`` pieces."""
        s = np.linspace(0.0, 1.0, factor + 1)[:-1]
        t0, t1 = self.times[:-1], self.times[1:]
        t = (t0[:, None] + s[None, :] * (t1 - t0)[:, None]).ravel()
        t = np.append(t, self.times[-1])
        return PiecewisePath(t, self(t))


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------
_MASK64 = (1 << 64) - 1


class RngStream:
    """Counter-based stream keyed by ``(master_seed, stream_id)``.

    Backed by numpy's Philox-4x64 with the 128-bit key built from the two ids,
    so a replica's draws depend only on its own key and never on the order in
    which replicas are evaluated.
    """

    def __init__(self, master_seed=0, stream_id=0):
        self.master_seed = int(master_seed) & _MASK64
        self.stream_id = int(stream_id) & _MASK64
        key = self.master_seed | (self.stream_id << 64)
        self.generator = np.random.Generator(np.random.Philox(key=key))

    def __repr__(self):
        return f"RngStream(master_seed={self.master_seed}, stream_id={self.stream_id})"

    def random(self, size=None):
        return self.generator.random(size)

    def spawn(self, stream_id):
        return RngStream(self.master_seed, stream_id)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------
def _probe_drift(spec):
    lo, hi = spec.slow_domain
    xs = np.linspace(lo, hi, PROBE_N)
    ys = (np.arange(PROBE_N) + 0.5) / PROBE_N
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    try:
        vals = np.asarray(spec.drift.rule(X, Y), dtype=float)
        if vals.shape != X.shape:
            raise TypeError
    except Exception:
        vals = np.vectorize(lambda a, b: float(spec.drift.rule(a, b)))(X, Y)
    return vals


def validate_system(spec):
    """Check the declared invariants of ``spec`` and return it unchanged.

    Raises one of :class:`BadEpsilon`, :class:`BoundViolated`,
    :class:`NonStochasticRow`, :class:`NegativeDensity` or a plain
    :class:`ValidationError` for structural problems.
    """
    eps = spec.epsilon
    if not (isinstance(eps, (int, float)) and 0.0 < eps < 1.0):
        raise BadEpsilon(f"epsilon must lie in (0, 1), got {eps!r}")
    lo, hi = spec.slow_domain
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValidationError(f"empty or unbounded slow domain {spec.slow_domain!r}")
    K = spec.drift.bound
    if not (np.isfinite(K) and K > 0):
        raise ValidationError("drift bound must be finite and positive")
    vals = _probe_drift(spec)
    if not np.all(np.isfinite(vals)):
        raise BoundViolated("drift is not finite on the probe grid")
    worst = float(np.max(np.abs(vals)))
    if worst > K * (1 + 1e-12):
        raise BoundViolated(f"|B| reaches {worst:.6g} > declared bound {K:.6g}")

    drv = spec.driver
    if isinstance(drv, ExpandingDriver):
        if int(drv.multiplier) != drv.multiplier or drv.multiplier < 2:
            raise ValidationError("expanding multiplier must be an integer >= 2")
    elif isinstance(drv, AdditiveNoiseDriver):
        d = np.asarray(drv.density, dtype=float)
        if d.ndim != 1 or len(d) < 1:
            raise ValidationError("noise density must be a 1-D table")
        if np.any(d < 0):
            raise NegativeDensity("noise density has negative entries")
        mass = d.sum() / len(d)
        if abs(mass - 1.0) > ROW_TOL:
            raise NonStochasticRow(f"noise density integrates to {mass:.12g}, not 1")
    elif isinstance(drv, KernelDriver):
        for x in np.linspace(lo, hi, 5):
            P = np.asarray(drv.kernel(x, drv.n_y), dtype=float)
            if P.shape != (drv.n_y, drv.n_y):
                raise ValidationError(f"kernel returned shape {P.shape}")
            if np.any(P < 0):
                raise NegativeDensity(f"kernel has negative entries at x={x:g}")
            err = np.max(np.abs(P.sum(axis=1) - 1.0))
            if err > ROW_TOL:
                raise NonStochasticRow(f"kernel row sums off by {err:.3g} at x={x:g}")
    else:
        raise ValidationError(f"unsupported fast driver {type(drv).__name__}")
    return spec


# ---------------------------------------------------------------------------
# built-in systems
# ---------------------------------------------------------------------------
@numba.njit(cache=True)
def identity_coupling(x):
    return x


@numba.njit(cache=True)
def _b1(x):
    return x * (x * x - 4.0) * (1.0 - x * x)


@numba.njit(cache=True)
def _b2(x):
    return x * (x * x - 4.0) * (1.0 - x) * (1.5 + x)


def averaged_b1(x):
    """Averaged drift of the symmetric examples, x(x^2-4)(1-x^2)."""
    x = np.asarray(x, dtype=float)
    return x * (x * x - 4.0) * (1.0 - x * x)


def averaged_b2(x):
    """Averaged drift of the asymmetric examples, x(x^2-4)(1-x)(1.5+x)."""
    x = np.asarray(x, dtype=float)
    return x * (x * x - 4.0) * (1.0 - x) * (1.5 + x)


@functools.lru_cache(maxsize=None)
def _sine_drift(base, amplitude):
    """Compiled rule ``base(x) + amplitude * sin(2 pi y)``."""
    b = {"b1": _b1, "b2": _b2}[base]

    @numba.njit
    def rule(x, y):
        return b(x) + amplitude * np.sin(2.0 * np.pi * y)

    return rule


@functools.lru_cache(maxsize=None)
def _well_drift(kappa, amplitude):
    @numba.njit
    def rule(x, y):
        return kappa * x * (1.0 - x * x) + amplitude * np.sin(2.0 * np.pi * y)

    return rule


@functools.lru_cache(maxsize=None)
def _const_drift(b0, amplitude):
    @numba.njit
    def rule(x, y):
        return b0 + 0.0 * x + amplitude * np.sin(2.0 * np.pi * y)

    return rule


def _custom_sine_drift(b, amplitude):
    if isinstance(b, numba.core.registry.CPUDispatcher):
        @numba.njit
        def rule(x, y):
            return b(x) + amplitude * np.sin(2.0 * np.pi * y)
    else:
        def rule(x, y):
            return b(x) + amplitude * np.sin(2.0 * np.pi * np.asarray(y, dtype=float))
    return rule


@numba.njit(cache=True)
def _pure_sine(x, y):
    return np.sin(2.0 * np.pi * y) + 0.0 * x


def _bound_of(b, lo, hi, amplitude):
    xs = np.linspace(lo, hi, 20001)
    base = np.max(np.abs(np.asarray(b(xs), dtype=float)))
    return float(base + abs(amplitude)) * (1 + 1e-9) + 1e-12


def _lipschitz_of(b, lo, hi, amplitude):
    xs = np.linspace(lo, hi, 20001)
    d = np.max(np.abs(np.diff(np.asarray(b(xs), dtype=float)) / np.diff(xs)))
    return float(max(d, 2 * math.pi * abs(amplitude)))


UNIFORM_NOISE = np.ones(1)

BUILTIN_NAMES = (
    "expanding-sym",
    "expanding-asym",
    "markov-sym",
    "markov-asym",
    "zero-drift-doubling",
    "iid-bessel",
    "three-scale",
)


def _polynomial_example(base, markov, epsilon, amplitude=50.0):
    b = {"b1": averaged_b1, "b2": averaged_b2}[base]
    lo, hi = -3.0, 3.0
    drift = DriftSpec(
        _sine_drift(base, float(amplitude)),
        _bound_of(b, lo, hi, amplitude),
        _lipschitz_of(b, lo, hi, amplitude),
    )
    if markov:
        driver = AdditiveNoiseDriver(UNIFORM_NOISE, identity_coupling)
    else:
        driver = ExpandingDriver(3, identity_coupling)
    kind = "markov" if markov else "expanding"
    shape = "sym" if base == "b1" else "asym"
    return SystemSpec(
        drift, driver, float(epsilon), (lo, hi),
        name=f"{kind}-{shape}",
        beta_max=6.0 / amplitude,
        params={"amplitude": amplitude, "bbar": b},
    )


def make_builtin(name, **params):
    """Return one of the built-in example systems.

    expanding-sym / expanding-asym
        B = x(x^2-4)(1-x^2) + 50 sin 2 pi y  (resp. x(x^2-4)(1-x)(1.5+x) + ...),
        y' = 3y + x mod 1, eps = 1e-3.
    markov-sym / markov-asym
        same drifts, y' = y + x + xi mod 1 with xi uniform on [0, 1).
    zero-drift-doubling
        x' = x + eps sin 2 pi y, y' = 2y + x mod 1.
    iid-bessel
        B = b(x) + c sin 2 pi y with uniform additive noise; ``b`` defaults to
        the double well kappa*x*(1-x^2).  Successive fast states are i.i.d.
        uniform, so H(x, beta) = beta b(x) + log I0(c beta) exactly.
    three-scale
        the slow/intermediate/fast triple; see :mod:`slowfast.resonance`.

    Keyword overrides: ``epsilon`` for every system; ``amplitude`` for the
    polynomial examples; ``c``, ``kappa``, ``b0``, ``b`` and ``domain`` for
    iid-bessel.
    """
    if name in ("expanding-sym", "expanding-asym", "markov-sym", "markov-asym"):
        base = "b2" if "asym" in name else "b1"
        eps = params.pop("epsilon", 1e-3)
        amp = params.pop("amplitude", 50.0)
        _reject_extra(name, params)
        return _polynomial_example(base, name.startswith("markov"), eps, amp)
    if name == "zero-drift-doubling":
        eps = params.pop("epsilon", 1e-3)
        _reject_extra(name, params)
        return SystemSpec(
            DriftSpec(_pure_sine, 1.0 + 1e-12, 2 * math.pi),
            ExpandingDriver(2, identity_coupling),
            float(eps), (-1.0, 1.0), name=name, beta_max=6.0,
            params={"amplitude": 1.0, "bbar": lambda x: 0.0 * np.asarray(x, dtype=float)},
        )
    if name == "iid-bessel":
        return _iid_bessel(params)
    if name == "three-scale":
        from .resonance import make_three_scale

        return make_three_scale(**params)
    raise UnknownName(f"unknown built-in system {name!r}; choose from {BUILTIN_NAMES}")


def _reject_extra(name, params):
    if params:
        raise UnknownName(f"{name} does not take parameters {sorted(params)}")


def _iid_bessel(params):
    eps = float(params.pop("epsilon", 1.0 / 40))
    c = float(params.pop("c", 1.0))
    lo, hi = params.pop("domain", (-2.0, 2.0))
    b = params.pop("b", None)
    b0 = params.pop("b0", None)
    kappa = params.pop("kappa", None)
    _reject_extra("iid-bessel", params)
    if sum(v is not None for v in (b, b0, kappa)) > 1:
        raise ValidationError("give at most one of b, b0, kappa")
    if b is not None:
        rule = _custom_sine_drift(b, c)
        bbar = b
    elif b0 is not None:
        b0 = float(b0)
        rule = _const_drift(b0, c)
        bbar = lambda x, _b0=b0: _b0 + 0.0 * np.asarray(x, dtype=float)  # noqa: E731
    else:
        kappa = 0.1 if kappa is None else float(kappa)
        rule = _well_drift(kappa, c)
        bbar = lambda x, _k=kappa: _k * np.asarray(x) * (1.0 - np.asarray(x) ** 2)  # noqa: E731
    return SystemSpec(
        DriftSpec(rule, _bound_of(bbar, lo, hi, c), _lipschitz_of(bbar, lo, hi, c)),
        AdditiveNoiseDriver(UNIFORM_NOISE, identity_coupling),
        eps, (float(lo), float(hi)),
        name="iid-bessel",
        beta_max=6.0 / max(c, 1e-12),
        params={"amplitude": c, "kappa": kappa, "b0": b0, "bbar": bbar},
    )


def _poly_rule(coeffs, amplitude):
    cs = np.ascontiguousarray(coeffs[::-1], dtype=np.float64)
    n = cs.shape[0]

    @numba.njit
    def rule(x, y):
        acc = cs[0] + 0.0 * x
        for k in range(1, n):
            acc = acc * x + cs[k]
        return acc + amplitude * np.sin(2.0 * np.pi * y)

    return rule


def make_polynomial(coeffs, amplitude=1.0, driver="additive-uniform", multiplier=3,
                    epsilon=1e-3, domain=(-3.0, 3.0), name="polynomial"):
    """B = sum_k coeffs[k] x^k + amplitude sin 2 pi y with a Lebesgue-invariant driver.

    ``driver`` is ``"additive-uniform"`` (y' = y + x + xi, xi uniform) or
    ``"expanding"`` (y' = multiplier*y + x).  Either way the fast measure is
    Lebesgue, so the averaged drift is the polynomial itself.
    """
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    if coeffs.size == 0:
        raise ValidationError("need at least one polynomial coefficient")
    lo, hi = map(float, domain)
    bbar = lambda x, _c=coeffs: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), _c)  # noqa: E731
    if driver == "additive-uniform":
        drv = AdditiveNoiseDriver(UNIFORM_NOISE, identity_coupling)
    elif driver == "expanding":
        drv = ExpandingDriver(int(multiplier), identity_coupling)
    else:
        raise UnknownName(f"unknown driver {driver!r}; use additive-uniform or expanding")
    amplitude = float(amplitude)
    spec = SystemSpec(
        DriftSpec(_poly_rule(coeffs, amplitude), _bound_of(bbar, lo, hi, amplitude),
                  _lipschitz_of(bbar, lo, hi, amplitude)),
        drv, float(epsilon), (lo, hi), name=name,
        beta_max=6.0 / max(abs(amplitude), 1e-12),
        params={"amplitude": amplitude, "coeffs": tuple(coeffs.tolist()), "bbar": bbar},
    )
    return spec


def exact_bbar(spec) -> Optional[Callable]:
    """Closed-form averaged drift for built-ins whose fast measure is Lebesgue."""
    return spec.params.get("bbar")


# ---------------------------------------------------------------------------
# fast-state update rules used by the simulation loops
# ---------------------------------------------------------------------------
def is_compiled(fn):
    return isinstance(fn, numba.core.registry.CPUDispatcher)


@numba.njit(cache=True)
def wrap_scalar(v):
    r = v % 1.0
    if r >= 1.0:
        r = 0.0
    return r


def _wrap_py(v):
    r = v % 1.0
    return 0.0 if r >= 1.0 else r


_STEPPERS = {}


def fast_stepper(driver):
    """Return ``(fast, noisy)`` where ``fast(x, y, u) -> y'``.

    ``u`` is one uniform draw on [0, 1), consumed only when ``noisy``.  The
    returned function is numba-compiled whenever the driver's coupling is, so
    it can be passed into the compiled loops of :mod:`slowfast._loops`.
    """
    key = id(driver)
    hit = _STEPPERS.get(key)
    if hit is not None and hit[0] is driver:
        return hit[1]
    made = _make_stepper(driver)
    _STEPPERS[key] = (driver, made)
    return made


def _make_stepper(driver):
    if isinstance(driver, ExpandingDriver):
        m = float(driver.multiplier)
        c = driver.coupling
        if is_compiled(c):
            @numba.njit
            def fast(x, y, u):
                return wrap_scalar(m * y + c(x))
        else:
            def fast(x, y, u):
                return _wrap_py(m * y + float(c(x)))
        return fast, False

    if isinstance(driver, AdditiveNoiseDriver):
        c = driver.coupling
        n = float(driver.n_noise)
        cdf = driver.cdf.copy()
        uniform = driver.is_uniform
        if is_compiled(c):
            if uniform:
                @numba.njit
                def fast(x, y, u):
                    return wrap_scalar(y + c(x) + u)
            else:
                @numba.njit
                def fast(x, y, u):
                    j = np.searchsorted(cdf, u, side="right") - 1
                    xi = (j + (u - cdf[j]) / (cdf[j + 1] - cdf[j])) / n
                    return wrap_scalar(y + c(x) + xi)
        else:
            def fast(x, y, u):
                if uniform:
                    xi = u
                else:
                    j = int(np.searchsorted(cdf, u, side="right")) - 1
                    xi = (j + (u - cdf[j]) / (cdf[j + 1] - cdf[j])) / n
                return _wrap_py(y + float(c(x)) + xi)
        return fast, True

    if isinstance(driver, KernelDriver):
        n_y = driver.n_y
        kern = driver.kernel

        def fast(x, y, u):
            i = int(round(y * n_y)) % n_y
            row = np.cumsum(np.asarray(kern(x, n_y), dtype=float)[i])
            j = min(int(np.searchsorted(row, u * row[-1], side="right")), n_y - 1)
            return j / n_y
        return fast, True

    raise ValidationError(f"unsupported fast driver {type(driver).__name__}")
