"""Inner simulation loops.

Each loop is written once in plain Python and compiled with numba on demand.
The compiled variant is used when every rule handed to it is itself a numba
dispatcher; otherwise the interpreted original runs the same arithmetic.

Conventions shared by all loops: ``us`` holds one uniform draw per step for
noisy drivers (ignored otherwise), the fast update always sees the pre-step
slow state, and slow states are floats (d = 1).
"""
import math

import numba
import numpy as np

from .core import is_compiled

_JIT = {}


def pick(fn, *rules):
    if all(is_compiled(r) for r in rules):
        jf = _JIT.get(fn)
        if jf is None:
            jf = _JIT[fn] = numba.njit(fn)
        return jf
    return fn


def hist_loop(drift, fast, eps, x, y, us, noisy, n, lo, scale, counts):
    nb = counts.shape[0]
    out = 0
    for k in range(n):
        u = us[k] if noisy else 0.0
        b = drift(x, y)
        y = fast(x, y, u)
        x = x + eps * b
        idx = math.floor((x - lo) * scale)
        if 0 <= idx < nb:
            counts[idx] += 1
        else:
            out += 1
    return x, y, out


def record_loop(drift, fast, eps, x, y, us, noisy, n, xs, ys):
    for k in range(n):
        u = us[k] if noisy else 0.0
        b = drift(x, y)
        y = fast(x, y, u)
        x = x + eps * b
        xs[k] = x
        ys[k] = y
    return x, y


def maxdev_loop(drift, fast, eps, x, y, us, noisy, n, ref, offset, worst):
    """Advance ``n`` steps tracking max |x_k - ref[offset + k + 1]|."""
    for k in range(n):
        u = us[k] if noisy else 0.0
        b = drift(x, y)
        y = fast(x, y, u)
        x = x + eps * b
        d = abs(x - ref[offset + k + 1])
        if d > worst:
            worst = d
    return x, y, worst


def exit_loop(drift, fast, eps, x, y, us, noisy, n, vlo, vhi, olo, ohi):
    """Step until x leaves [vlo, vhi] or ``n`` steps are used.

    Returns (steps, exited, x, y, away) where ``away`` counts pre-exit states
    (including the chunk's starting state) lying outside [olo, ohi].
    """
    away = 0
    for k in range(n):
        if x < olo or x > ohi:
            away += 1
        u = us[k] if noisy else 0.0
        b = drift(x, y)
        y = fast(x, y, u)
        x = x + eps * b
        if x < vlo or x > vhi:
            return k + 1, True, x, y, away
    return n, False, x, y, away


def transition_loop(drift, fast, eps, x, y, us, noisy, n, centers, delta,
                    phase, last, step0, out_steps, out_idx, n_out, n_max):
    """Double-layer stopping-time scan.

    ``phase`` 0: waiting to leave every 2*delta neighbourhood; ``phase`` 1:
    waiting to enter some delta neighbourhood.  An entry into the delta
    neighbourhood of attractor ``j != last`` is logged as (step, j).
    """
    m = centers.shape[0]
    for k in range(n):
        u = us[k] if noisy else 0.0
        b = drift(x, y)
        y = fast(x, y, u)
        x = x + eps * b
        if phase == 0:
            inside = False
            for j in range(m):
                if abs(x - centers[j]) < 2.0 * delta:
                    inside = True
            if not inside:
                phase = 1
        else:
            for j in range(m):
                if abs(x - centers[j]) < delta:
                    phase = 0
                    if j != last:
                        out_steps[n_out] = step0 + k + 1
                        out_idx[n_out] = j
                        n_out += 1
                        last = j
                    break
        if n_out >= n_max:
            return k + 1, x, y, phase, last, n_out
    return n, x, y, phase, last, n_out


def three_scale_loop(A, B, fast, eps, epsdelta, v, x, y, us, noisy, n,
                     subsample, step0, vs, centers, radius, last,
                     mark_steps, mark_idx, n_mark, bound):
    """Three-scale recursion; every update reads pre-step (v, x, y).

    Writes v at absolute steps divisible by ``subsample`` into ``vs`` (indexed
    by step // subsample) and logs entries of x into the ``radius``
    neighbourhood of a different attractor than the last one.  Returns a
    negative step count on blow-up (|v| or |x| above ``bound``).
    """
    m = centers.shape[0]
    for k in range(n):
        u = us[k] if noisy else 0.0
        a = A(v, x, y)
        b = B(v, x, y)
        y = fast(v, x, y, u)
        v = v + epsdelta * a
        x = x + eps * b
        s = step0 + k + 1
        if abs(x) > bound or abs(v) > bound or x != x or v != v:
            return -(k + 1), v, x, y, last, n_mark
        if s % subsample == 0:
            vs[s // subsample] = v
        for j in range(m):
            if abs(x - centers[j]) < radius and j != last:
                if n_mark < mark_steps.shape[0]:
                    mark_steps[n_mark] = s
                    mark_idx[n_mark] = j
                n_mark += 1
                last = j
    return n, v, x, y, last, n_mark


def bin_indices(xs, lo, scale):
    """Vectorised twin of the binning in :func:`hist_loop`."""
    return np.floor((np.asarray(xs, dtype=float) - lo) * scale)
