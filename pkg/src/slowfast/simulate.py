"""Orbit simulation, averaging checks and metastability Monte Carlo."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from . import _loops
from .core import PiecewisePath, RngStream, fast_stepper
from .errors import BlowUp, NeighborhoodsOverlap, TooCensored, TooFewGroups

BLOCK_MIN = 1 << 12
BLOCK_MAX = 1 << 20
_EMPTY = np.zeros(0)


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------
def _rng(rng, seed, stream_id=0):
    if rng is not None:
        return rng
    return RngStream(seed, stream_id)


def initial_fast_state(system, y0, rng):
    """Resolve a y0 policy to a point on the circle.

    ``y0`` may be a number (fixed start), ``"uniform"`` (one draw from
    ``rng``), or None: uniform for deterministic drivers, 0.0 for Markov ones.
    """
    if y0 is None:
        y0 = 0.0 if system.is_markov else "uniform"
    if isinstance(y0, str):
        if y0 not in ("uniform", "uniform-random"):
            raise ValueError(f"unknown y0 policy {y0!r}")
        return float(rng.random())
    return float(y0) % 1.0


class _Chunks:
    """Yields per-chunk uniform blocks so one stream drives a whole orbit."""

    def __init__(self, system, rng, block=BLOCK_MIN, grow=True):
        self.fast, self.noisy = fast_stepper(system.driver)
        self.rng = rng
        self.block = block
        self.grow = grow
        self.left = None

    def push_back(self, us):
        if self.noisy and len(us):
            self.left = us

    def next(self, remaining):
        if self.left is not None:
            n = int(min(len(self.left), remaining))
            us, rest = self.left[:n], self.left[n:]
            self.left = rest if len(rest) else None
            return n, us
        n = int(min(self.block, remaining))
        if self.grow:
            self.block = min(self.block * 2, BLOCK_MAX)
        us = self.rng.random(n) if self.noisy else _EMPTY
        return n, us


def step(system, x, y, rng=None):
    """One step of the coupled map.  The fast update uses the old x."""
    fast, noisy = fast_stepper(system.driver)
    u = float(rng.random()) if noisy else 0.0
    b = float(system.drift.rule(x, y))
    y_new = fast(x, y, u)
    return x + system.epsilon * b, y_new


def orbit(system, x0, y0, n_steps, rng=None, seed=0):
    """Full orbit arrays ``(xs, ys)`` of length ``n_steps + 1``."""
    rng = _rng(rng, seed)
    y = initial_fast_state(system, y0, rng)
    xs = np.empty(n_steps + 1)
    ys = np.empty(n_steps + 1)
    xs[0], ys[0] = x0, y
    ch = _Chunks(system, rng)
    loop = _loops.pick(_loops.record_loop, system.drift.rule, ch.fast)
    x, done = float(x0), 0
    while done < n_steps:
        n, us = ch.next(n_steps - done)
        x, y = loop(system.drift.rule, ch.fast, system.epsilon, x, y, us, ch.noisy, n,
                    xs[done + 1:done + 1 + n], ys[done + 1:done + 1 + n])
        done += n
    return xs, ys


# ---------------------------------------------------------------------------
# histograms
# ---------------------------------------------------------------------------
@dataclass
class Histogram:
    lo: float
    hi: float
    counts: np.ndarray
    total: int
    out_of_range: int
    skipped: int = 0

    @property
    def bins(self):
        return len(self.counts)

    @property
    def edges(self):
        return np.linspace(self.lo, self.hi, self.bins + 1)

    @property
    def centers(self):
        e = self.edges
        return 0.5 * (e[1:] + e[:-1])

    def mass_near(self, points, radius):
        """Fraction of all counted samples whose bin center is within ``radius``."""
        c = self.centers
        near = np.zeros(self.bins, dtype=bool)
        for p in np.atleast_1d(points):
            near |= np.abs(c - p) < radius
        return float(self.counts[near].sum()) / self.total

    def mass_in(self, a, b):
        c = self.centers
        return float(self.counts[(c > a) & (c < b)].sum()) / self.total


def run_occupation_histogram(system, x0, n_steps, bins=10_000, range=(-3.0, 3.0),
                             y0=None, rng=None, seed=0, count_from_exit=None):
    """Streaming histogram of X(n), n = 0..n_steps, using O(bins) memory.

    With ``count_from_exit=(a, b)`` samples are only counted from the first
    step at which the orbit is outside [a, b]; earlier ones are reported in
    ``skipped``.
    """
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    lo, hi = float(range[0]), float(range[1])
    if not lo < hi or bins < 1:
        raise ValueError("histogram needs lo < hi and bins >= 1")
    rng = _rng(rng, seed)
    y = initial_fast_state(system, y0, rng)
    x = float(x0)
    counts = np.zeros(bins, dtype=np.int64)
    scale = bins / (hi - lo)
    ch = _Chunks(system, rng)
    drift, eps = system.drift.rule, system.epsilon

    done, skipped = 0, 0
    if count_from_exit is not None:
        a, b = count_from_exit
        xl = _loops.pick(_loops.exit_loop, drift, ch.fast)
        exited = not (a <= x <= b)
        while not exited and done < n_steps:
            n, us = ch.next(n_steps - done)
            k, exited, x, y, _ = xl(drift, ch.fast, eps, x, y, us, ch.noisy, n,
                                    a, b, -math.inf, math.inf)
            ch.push_back(us[k:])
            done += k
        skipped = done
        if done >= n_steps and not exited:
            return Histogram(lo, hi, counts, 0, 0, skipped + 1)

    out = 0
    idx = math.floor((x - lo) * scale)
    if 0 <= idx < bins:
        counts[idx] += 1
    else:
        out += 1
    hl = _loops.pick(_loops.hist_loop, drift, ch.fast)
    while done < n_steps:
        n, us = ch.next(n_steps - done)
        x, y, o = hl(drift, ch.fast, eps, x, y, us, ch.noisy, n, lo, scale, counts)
        out += o
        done += n
    total = n_steps + 1 - skipped
    return Histogram(lo, hi, counts, total, out, skipped)


def histogram_two_pass(xs, bins, range):
    """Reference histogram of a stored orbit with the streaming bin rule."""
    lo, hi = float(range[0]), float(range[1])
    idx = _loops.bin_indices(xs, lo, bins / (hi - lo))
    ok = (idx >= 0) & (idx < bins)
    counts = np.bincount(idx[ok].astype(np.int64), minlength=bins).astype(np.int64)
    return Histogram(lo, hi, counts, len(xs), int((~ok).sum()))


# ---------------------------------------------------------------------------
# averaged motion
# ---------------------------------------------------------------------------
def integrate_averaged(bbar, x0, t_end, h, domain=None):
    """Classical RK4 for dZ/dt = bbar(Z) on [0, t_end] with nodes every h.

    The last step is shortened when ``h`` does not divide ``t_end``.  Raises
    :class:`BlowUp` if the path leaves ``domain`` by more than its width.
    """
    if h <= 0 or t_end <= 0:
        raise ValueError("need h > 0 and t_end > 0")
    n_full = int(math.floor(t_end / h + 1e-9))
    times = list(np.arange(n_full + 1) * h)
    if t_end - times[-1] > 1e-12 * max(1.0, t_end):
        times.append(t_end)
    times = np.asarray(times)
    pts = np.empty(len(times))
    z = float(x0)
    pts[0] = z
    if domain is not None:
        lo, hi = domain
        w = hi - lo
    f = lambda s: float(bbar(s))  # noqa: E731
    for i in range(1, len(times)):
        dt = times[i] - times[i - 1]
        k1 = f(z)
        k2 = f(z + 0.5 * dt * k1)
        k3 = f(z + 0.5 * dt * k2)
        k4 = f(z + dt * k3)
        z = z + dt * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not math.isfinite(z) or (domain is not None and (z < lo - w or z > hi + w)):
            raise BlowUp(f"averaged path left the domain at t={times[i]:.6g}")
        pts[i] = z
    return PiecewisePath(times, pts)


def _reference_track(bbar, x0, eps, n, reference):
    if reference == "recursion":
        ref = np.empty(n + 1)
        z = float(x0)
        ref[0] = z
        for k in range(n):
            z = z + eps * float(bbar(z))
            ref[k + 1] = z
        return ref
    if reference == "ode":
        return integrate_averaged(bbar, x0, n * eps, eps).points[: n + 1]
    raise ValueError(f"unknown reference {reference!r}")


@dataclass
class AveragingStats:
    epsilon: float
    T: float
    deviations: np.ndarray
    quantiles: dict
    delta: float
    exceedance: float


def averaging_error_stat(system, bbar, x0, T, n_replicas, seed=0, y0=None,
                         delta=0.1, reference="ode", probs=(0.5, 0.9, 0.99)):
    """Distribution over replicas of sup_{t<=T} |Z^eps(t) - Zbar(t)|.

    Slow time is t = eps*n, compared on the step grid.  ``reference`` selects
    the averaged ODE ("ode", RK4 with step eps) or the averaged recursion
    x' = x + eps*bbar(x) ("recursion").
    """
    eps = system.epsilon
    n = int(round(T / eps))
    ref = _reference_track(bbar, x0, eps, n, reference)
    devs = np.empty(n_replicas)
    drift = system.drift.rule
    for r in np.arange(n_replicas):
        rng = RngStream(seed, int(r))
        y = initial_fast_state(system, y0, rng)
        ch = _Chunks(system, rng)
        loop = _loops.pick(_loops.maxdev_loop, drift, ch.fast)
        x, done, worst = float(x0), 0, abs(float(x0) - ref[0])
        while done < n:
            k, us = ch.next(n - done)
            x, y, worst = loop(drift, ch.fast, eps, x, y, us, ch.noisy, k, ref, done, worst)
            done += k
        devs[r] = worst
    q = {p: float(np.quantile(devs, p)) for p in probs}
    return AveragingStats(eps, T, devs, q, delta, float(np.mean(devs > delta)))


# ---------------------------------------------------------------------------
# exit times
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ExitSample:
    epsilon: float
    replica: int
    tau_slow: float
    censored: bool
    exit_point: float
    steps: int = 0
    away_steps: int = 0

    @property
    def away_fraction(self):
        return self.away_steps / self.steps if self.steps else 0.0


def default_cap(epsilon, R_hat):
    return 10.0 * math.exp(R_hat / epsilon)


def first_exit_time(system, x0, V, cap_slow_time=None, rng=None, seed=0, replica=0,
                    y0=None, R_hat=None, neighborhood=None):
    """First slow time eps*n with X(n) outside the interval ``V``.

    Censored at ``cap_slow_time`` (default ``10*exp(R_hat/eps)`` when a
    quasipotential estimate ``R_hat`` is given).  ``neighborhood=(a, b)``
    additionally counts pre-exit states outside [a, b].
    """
    eps = system.epsilon
    if cap_slow_time is None:
        if R_hat is None:
            raise ValueError("cap_slow_time is required unless R_hat is supplied")
        cap_slow_time = default_cap(eps, R_hat)
    if cap_slow_time <= 0:
        raise ValueError("cap must be positive")
    rng = _rng(rng, seed, replica)
    y = initial_fast_state(system, y0, rng)
    vlo, vhi = V
    olo, ohi = neighborhood if neighborhood is not None else (-math.inf, math.inf)
    x = float(x0)
    if not (vlo <= x <= vhi):
        return ExitSample(eps, replica, 0.0, False, x, 0, 0)
    cap_steps = int(math.floor(cap_slow_time / eps))
    ch = _Chunks(system, rng)
    drift = system.drift.rule
    loop = _loops.pick(_loops.exit_loop, drift, ch.fast)
    done, away, exited = 0, 0, False
    while done < cap_steps and not exited:
        n, us = ch.next(cap_steps - done)
        k, exited, x, y, a = loop(drift, ch.fast, eps, x, y, us, ch.noisy, n,
                                  vlo, vhi, olo, ohi)
        done += k
        away += a
    if exited:
        return ExitSample(eps, replica, done * eps, False, x, done, away)
    return ExitSample(eps, replica, float(cap_slow_time), True, x, done, away)


def exit_times(system, x0, V, n_replicas, cap_slow_time=None, seed=0, y0=None,
               R_hat=None, first_replica=0):
    """Independent replicas of :func:`first_exit_time` (replica r uses stream r)."""
    return [
        first_exit_time(system, x0, V, cap_slow_time, seed=seed, replica=r, y0=y0,
                        R_hat=R_hat)
        for r in np.arange(first_replica, first_replica + n_replicas).tolist()
    ]


@dataclass
class ExitGroup:
    epsilon: float
    n: int
    n_censored: int
    mean_excluded: float
    mean_imputed: float

    @property
    def censored_fraction(self):
        return self.n_censored / self.n

    @property
    def disagree(self):
        return abs(self.mean_imputed - self.mean_excluded) > 0.05 * self.mean_excluded


@dataclass
class ExitFit:
    slope: float
    intercept: float
    r2: float
    groups: list = field(default_factory=list)

    @property
    def flagged(self):
        return any(g.disagree for g in self.groups)


def exit_scaling_fit(samples, max_censored=0.10):
    """Least-squares fit of log(mean tau) against 1/eps; the slope estimates R.

    Group means exclude censored replicas; cap-imputed means are reported
    alongside and :attr:`ExitFit.flagged` marks groups where they differ by
    more than 5%.
    """
    by_eps = {}
    for s in samples:
        by_eps.setdefault(float(s.epsilon), []).append(s)
    if len(by_eps) < 3:
        raise TooFewGroups(f"need >= 3 distinct epsilon values, got {len(by_eps)}")
    groups = []
    for eps in sorted(by_eps):
        g = by_eps[eps]
        taus = np.array([s.tau_slow for s in g])
        cens = np.array([s.censored for s in g])
        if cens.mean() >= max_censored:
            raise TooCensored(f"{cens.mean():.1%} of replicas censored at eps={eps:g}")
        groups.append(ExitGroup(eps, len(g), int(cens.sum()),
                                float(taus[~cens].mean()), float(taus.mean())))
    inv = np.array([1.0 / g.epsilon for g in groups])
    logm = np.log([g.mean_excluded for g in groups])
    res = stats.linregress(inv, logm)
    return ExitFit(float(res.slope), float(res.intercept), float(res.rvalue ** 2), groups)


# ---------------------------------------------------------------------------
# boundary chain
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class Transition:
    k: int
    attractor: int
    entry_time: float
    sojourn: float


@dataclass
class TransitionLog:
    entries: list
    delta: float
    initial: int
    start_time: float = 0.0
    complete: bool = True
    steps: int = 0
    epsilon: float = math.nan

    @property
    def span(self):
        if not self.entries:
            return 0.0
        return self.entries[-1].entry_time - self.start_time

    def time_fractions(self, n_attractors):
        """Share of logged time attached to each attractor.

        The interval ending at entry k is credited to the attractor entered at
        k-1 (or ``initial``); the leading interval is dropped when the orbit
        did not start inside an attractor neighbourhood.
        """
        tot = np.zeros(n_attractors)
        prev = self.initial
        for e in self.entries:
            if prev >= 0:
                tot[prev] += e.sojourn
            prev = e.attractor
        s = tot.sum()
        return tot / s if s > 0 else tot

    def visit_counts(self, n_attractors):
        return np.bincount([e.attractor for e in self.entries], minlength=n_attractors)


def _check_neighborhoods(attractors, delta, domain):
    a = np.sort(np.asarray(attractors, dtype=float))
    if delta <= 0:
        raise ValueError("delta must be positive")
    if len(a) > 1 and np.min(np.diff(a)) <= 4 * delta:
        raise NeighborhoodsOverlap(
            f"2*delta neighbourhoods overlap: min attractor gap {np.min(np.diff(a)):.4g}, "
            f"delta={delta:g}")
    if domain is not None:
        lo, hi = domain
        if a[0] - 2 * delta < lo or a[-1] + 2 * delta > hi:
            raise NeighborhoodsOverlap("2*delta neighbourhoods leave the slow domain")


def transition_sequence(system, attractors, delta, n_transitions, x0, y0=None,
                        rng=None, seed=0, max_steps=10**9):
    """Boundary-chain log of attractor changes.

    Stops after ``n_transitions`` logged changes or ``max_steps`` steps; in
    the latter case the partial log comes back with ``complete=False``.
    """
    centers = np.asarray(attractors, dtype=float)
    _check_neighborhoods(centers, delta, system.slow_domain)
    rng = _rng(rng, seed)
    y = initial_fast_state(system, y0, rng)
    x = float(x0)
    dist = np.abs(x - centers)
    if np.any(dist < delta):
        last, phase = int(np.argmin(dist)), 0
    elif np.any(dist < 2 * delta):
        last, phase = -1, 0
    else:
        last, phase = -1, 1
    initial = last
    out_steps = np.zeros(n_transitions, dtype=np.int64)
    out_idx = np.zeros(n_transitions, dtype=np.int64)
    n_out = 0
    ch = _Chunks(system, rng)
    drift, eps = system.drift.rule, system.epsilon
    loop = _loops.pick(_loops.transition_loop, drift, ch.fast)
    done = 0
    while n_out < n_transitions and done < max_steps:
        n, us = ch.next(max_steps - done)
        k, x, y, phase, last, n_out = loop(drift, ch.fast, eps, x, y, us, ch.noisy, n,
                                           centers, float(delta), phase, last, done,
                                           out_steps, out_idx, n_out, n_transitions)
        done += k
    entries = []
    prev_t = 0.0
    for k in np.arange(n_out).tolist():
        t = out_steps[k] * eps
        entries.append(Transition(k, int(out_idx[k]), t, t - prev_t))
        prev_t = t
    return TransitionLog(entries, float(delta), initial, 0.0, n_out >= n_transitions,
                         done, eps)


def occupation_fraction_outside(system, x0, V, delta, attractor, cap_slow_time,
                                rng=None, seed=0, replica=0, y0=None):
    """Fraction of pre-exit time spent in V but outside U_delta(attractor).

    Returns ``(fraction, ExitSample)``.
    """
    s = first_exit_time(system, x0, V, cap_slow_time, rng=rng, seed=seed, replica=replica,
                        y0=y0, neighborhood=(attractor - delta, attractor + delta))
    return s.away_fraction, s
