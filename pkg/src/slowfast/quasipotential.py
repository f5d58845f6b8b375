"""Attractors of the averaged flow, quasipotentials and transition weights (d = 1)."""
from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    AllInfinite,
    BetaOutOfBracket,
    DegenerateZero,
    NoAttractors,
    OutOfTableRange,
    TableGap,
    TooLarge,
)

ROOT_TOL = 1e-12


# ---------------------------------------------------------------------------
# attractors
# ---------------------------------------------------------------------------
@dataclass
class AttractorSet:
    attractors: np.ndarray
    separators: np.ndarray
    basins: list
    domain: tuple

    @property
    def ell(self):
        return len(self.attractors)

    def basin_of(self, x):
        for i, (a, b) in enumerate(self.basins):
            if a <= x <= b:
                return i
        return -1


def _bisect(f, a, b, fa, tol=ROOT_TOL):
    while b - a > tol:
        m = 0.5 * (a + b)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm < 0) == (fa < 0):
            a, fa = m, fm
        else:
            b = m
    return 0.5 * (a + b)


def find_attractors(bbar, domain, n_grid=1024, h=1e-6):
    """Zeros of the averaged drift, split into attractors and separators.

    Sign changes on an ``n_grid`` grid are refined by bisection to 1e-12 and
    classified by the sign of a centred difference.
    """
    if n_grid < 64:
        raise ValueError("n_grid must be at least 64")
    lo, hi = map(float, domain)
    f = lambda s: float(bbar(s))  # noqa: E731
    xs = np.linspace(lo, hi, n_grid + 1)
    fs = np.array([f(x) for x in xs])
    zeros = []
    for k in range(n_grid + 1):
        if fs[k] == 0.0:
            zeros.append(xs[k])
    for k in range(n_grid):
        if fs[k] * fs[k + 1] < 0:
            zeros.append(_bisect(f, xs[k], xs[k + 1], fs[k]))
    zeros.sort()
    att, sep = [], []
    for z in zeros:
        d = (f(z + h) - f(z - h)) / (2 * h)
        if abs(d) < 1e-10:
            raise DegenerateZero(f"averaged drift has a degenerate zero near {z:.12g}")
        (att if d < 0 else sep).append(z)
    if not att:
        raise NoAttractors("the averaged drift has no attracting zeros in the domain")
    att, sep = np.array(att), np.array(sep)
    cuts = [lo] + list(sep) + [hi]
    basins = []
    for a in att:
        j = int(np.searchsorted(sep, a))
        basins.append((cuts[j], cuts[j + 1]))
    return AttractorSet(att, sep, basins, (lo, hi))


# ---------------------------------------------------------------------------
# DP quasipotential
# ---------------------------------------------------------------------------
@dataclass
class QuasipotentialField:
    source: float
    grid: np.ndarray
    R: np.ndarray
    method: str

    def __call__(self, x):
        return np.interp(x, self.grid, self.R)


def default_speed_grid(rates, n=64):
    K = rates.system.drift.bound
    return np.geomspace(1e-3 * K, 0.999 * K, n)


@dataclass
class EdgeCosts:
    """Per-cell costs of moving right/left across each grid cell."""

    grid: np.ndarray
    right: np.ndarray
    left: np.ndarray


def dp_edge_costs(rates, x_grid, speed_grid=None):
    """Cell cost = min over speeds s of (h/s) * L(x_mid, +-s).

    Costs are clipped at zero; cells where no speed has finite L get +inf.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    if speed_grid is None:
        speed_grid = default_speed_grid(rates)
    s = np.asarray(speed_grid, dtype=float)
    if np.any(s <= 0):
        raise ValueError("speeds must be positive")
    alphas = np.concatenate([s, -s])
    n = len(x_grid) - 1
    right = np.empty(n)
    left = np.empty(n)
    for k in range(n):
        h = x_grid[k + 1] - x_grid[k]
        xm = 0.5 * (x_grid[k] + x_grid[k + 1])
        try:
            val, _, fin = rates.L(xm, alphas)
        except OutOfTableRange as exc:
            raise TableGap(str(exc)) from exc
        rate = np.where(fin, np.maximum(val, 0.0), np.inf) / np.abs(alphas)
        right[k] = h * np.min(rate[: len(s)])
        left[k] = h * np.min(rate[len(s):])
    return EdgeCosts(x_grid, right, left)


def _dijkstra(edges, src):
    n = len(edges.grid)
    dist = np.full(n, np.inf)
    dist[src] = 0.0
    heap = [(0.0, src)]
    done = np.zeros(n, dtype=bool)
    while heap:
        d, i = heapq.heappop(heap)
        if done[i]:
            continue
        done[i] = True
        if i + 1 < n:
            nd = d + edges.right[i]
            if nd < dist[i + 1]:
                dist[i + 1] = nd
                heapq.heappush(heap, (nd, i + 1))
        if i > 0:
            nd = d + edges.left[i - 1]
            if nd < dist[i - 1]:
                dist[i - 1] = nd
                heapq.heappush(heap, (nd, i - 1))
    return dist


def quasipotential_dp(rates, source, x_grid, speed_grid=None, edges=None):
    """R(source, .) on ``x_grid`` by Dijkstra over neighbouring grid cells.

    ``source`` must be a node of ``x_grid``.  Precomputed ``edges`` from
    :func:`dp_edge_costs` can be shared between sources on the same grid.
    """
    x_grid = np.asarray(x_grid, dtype=float)
    src = int(np.argmin(np.abs(x_grid - source)))
    if abs(x_grid[src] - source) > 1e-9 * max(1.0, abs(source)):
        raise ValueError("source must be a grid node; see grid_with_nodes()")
    if edges is None:
        edges = dp_edge_costs(rates, x_grid, speed_grid)
    return QuasipotentialField(float(source), x_grid, _dijkstra(edges, src), "dp")


def grid_with_nodes(lo, hi, n, nodes=()):
    """Uniform grid on [lo, hi] with the given points snapped in as nodes."""
    g = np.linspace(lo, hi, n + 1)
    for p in nodes:
        k = int(np.argmin(np.abs(g - p)))
        g[k] = p
    if np.any(np.diff(g) <= 0):
        raise ValueError("snapped nodes collide; refine the grid")
    return g


# ---------------------------------------------------------------------------
# HJ-root quasipotential
# ---------------------------------------------------------------------------
ZERO_DRIFT = 1e-13


def momentum_root(rates, x, direction, H=None):
    """Nonzero root of beta -> H(x, beta) on the side ``sign(direction)``.

    Returns None when the averaged drift does not oppose the direction of
    motion (no second root: the climb is free).
    """
    d = 1.0 if direction > 0 else -1.0
    bbar = rates.bbar(x)
    if bbar * d >= -ZERO_DRIFT:  # grid round-off near a zero of Bbar counts as zero
        return None
    if H is None:
        H = lambda b: rates.H_exact(x, b)  # noqa: E731
    b_max = rates.b_max
    t_hi = None
    for j in range(1, 65):
        t = b_max * j / 64
        if H(d * t) > 0:
            t_hi = t
            break
    if t_hi is None:
        raise BetaOutOfBracket(f"H(x={x:g}, .) has no root within |beta| <= {b_max:g}")
    t_lo = t_hi
    for _ in range(200):
        t_lo *= 0.5
        if H(d * t_lo) < 0:
            break
    else:
        return 0.0
    f = lambda t: H(d * t)  # noqa: E731
    return d * _bisect(f, t_lo, t_hi, f(t_lo))


def hj_root_quasipotential(rates, source, target, n_cells=400, x_grid=None):
    """Cost of the monotone climb from ``source`` to ``target``.

    Integrates |beta_hat(x)| dx with the trapezoid rule, beta_hat the nonzero
    root of H(x, .) = 0 where the averaged drift opposes the motion and 0
    elsewhere.
    """
    if x_grid is None:
        x_grid = np.linspace(source, target, n_cells + 1)
    x_grid = np.asarray(x_grid, dtype=float)
    if target == source:
        return 0.0
    d = math.copysign(1.0, target - source)
    beta = np.array([abs(momentum_root(rates, x, d) or 0.0) for x in x_grid])
    return float(np.sum(0.5 * (beta[1:] + beta[:-1]) * np.abs(np.diff(x_grid))))


# ---------------------------------------------------------------------------
# transition structure
# ---------------------------------------------------------------------------
@dataclass
class TransitionStructure:
    R: np.ndarray
    attractors: np.ndarray
    epsilon: float = math.nan
    log_Q: np.ndarray = None
    prediction: np.ndarray = None

    @property
    def ell(self):
        return len(self.attractors)

    @property
    def R_i(self):
        R = self.R.copy()
        np.fill_diagonal(R, np.inf)
        return R.min(axis=1)


def transition_matrix(attractor_set, rates, method="dp", n_grid=600, speed_grid=None,
                      n_cells=200):
    """R_ij = inf over z in V_j of R(O_i, z).

    ``method="dp"`` runs Dijkstra from each attractor over the whole domain
    (downhill legs cost ~0 automatically).  ``method="hj"`` adds up the
    HJ-root barriers O_k -> separator crossed on the way from i to j.
    """
    A = attractor_set
    ell = A.ell
    R = np.full((ell, ell), np.nan)
    if method == "dp":
        lo, hi = A.domain
        grid = grid_with_nodes(lo, hi, n_grid, list(A.attractors) + list(A.separators))
        edges = dp_edge_costs(rates, grid, speed_grid)
        # R is continuous, so the infimum over an open basin is the minimum
        # over its closure (separators are grid nodes).
        for i in range(ell):
            f = quasipotential_dp(rates, A.attractors[i], grid, edges=edges)
            for j in range(ell):
                if j != i:
                    a, b = A.basins[j]
                    inside = (grid >= a) & (grid <= b)
                    R[i, j] = float(np.min(f.R[inside]))
        return TransitionStructure(R, A.attractors.copy())
    if method == "hj":
        up = [hj_root_quasipotential(rates, A.attractors[k], A.separators[k], n_cells)
              for k in range(ell - 1)]
        down = [hj_root_quasipotential(rates, A.attractors[k + 1], A.separators[k], n_cells)
                for k in range(ell - 1)]
        for i in range(ell):
            for j in range(ell):
                if j > i:
                    R[i, j] = sum(up[i:j])
                elif j < i:
                    R[i, j] = sum(down[j:i])
        return TransitionStructure(R, A.attractors.copy())
    raise ValueError(f"unknown method {method!r}")


def enumerate_igraphs(ell, i):
    """All i-graphs on labels 0..ell-1 as dicts {origin: target}.

    Every label other than ``i`` emits exactly one arrow, no self-loops, and
    following arrows from any label reaches ``i`` (no cycles).
    """
    if ell > 8:
        raise TooLarge("i-graph enumeration is limited to ell <= 8")
    if ell < 2:
        raise ValueError("need at least two attractors")
    others = [k for k in range(ell) if k != i]
    choices = [[l for l in range(ell) if l != k] for k in others]
    out = []
    for targets in itertools.product(*choices):
        g = dict(zip(others, targets))
        if _acyclic(g, i):
            out.append(g)
    return out


def _acyclic(g, root):
    for start in g:
        seen = set()
        k = start
        while k != root:
            if k in seen:
                return False
            seen.add(k)
            k = g[k]
    return True


def _logsumexp(a):
    a = np.asarray(a, dtype=float)
    if a.size == 0 or np.all(np.isneginf(a)):
        return -math.inf
    m = np.max(a)
    return float(m + math.log(np.sum(np.exp(a - m))))


def igraph_weights(R, epsilon):
    """log Q_i = log sum over i-graphs g of exp(-sum_{(k->l) in g} R_kl / eps).

    Returns a :class:`TransitionStructure` with ``log_Q`` and the normalised
    occupation prediction Q_i / sum Q.  Infinite R entries drop their graphs.
    """
    R = np.asarray(R, dtype=float)
    ell = R.shape[0]
    logQ = np.empty(ell)
    for i in range(ell):
        terms = []
        for g in enumerate_igraphs(ell, i):
            s = sum(R[k, l] for k, l in g.items())
            terms.append(-s / epsilon if math.isfinite(s) else -math.inf)
        logQ[i] = _logsumexp(terms)
    if np.all(np.isneginf(logQ)):
        raise AllInfinite("every i-graph uses an infinite R entry")
    pred = np.exp(logQ - _logsumexp(logQ))
    return TransitionStructure(R.copy(), np.arange(ell, dtype=float), float(epsilon), logQ, pred)


def predict_exit_time(R_i, epsilon, alpha_band):
    """Point prediction exp(R_i/eps) and band exp((R_i -+ alpha)/eps)."""
    return (math.exp(R_i / epsilon),
            (math.exp((R_i - alpha_band) / epsilon), math.exp((R_i + alpha_band) / epsilon)))
