"""CSV and SVG writers with deterministic formatting."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import EmptyData


def fmt(v):
    """17 significant digits for floats, plain text for everything else."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path, header, rows, preamble=()):
    """Write ``rows`` under a comma-separated ``header``; ``preamble`` lines get a '# '."""
    path = Path(path)
    with path.open("w", newline="\n") as fh:
        for line in preamble:
            fh.write(f"# {line}\n")
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")
    return path


def read_csv(path):
    """Header and float rows of a file written by :func:`write_csv`."""
    lines = [ln for ln in Path(path).read_text().splitlines() if not ln.startswith("#")]
    header = lines[0].split(",")
    rows = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    return header, rows


# ---------------------------------------------------------------------------
# SVG
# ---------------------------------------------------------------------------
WIDTH, HEIGHT = 800, 600
MARGIN = 50


def _n(v):
    return f"{v:.3f}"


def emit_svg(data, style=None):
    """Standalone 800x600 SVG of a histogram or an (x, y) trace.

    ``data`` is a Histogram-like object (``counts``, ``lo``, ``hi``) or a pair
    of equal-length arrays.  Histogram bins become one rectangle each (empty
    bins are skipped); traces become a single polyline.
    """
    style = dict(style or {})
    title = style.get("title", "")
    color = style.get("color", "#3465a4")
    pw, ph = WIDTH - 2 * MARGIN, HEIGHT - 2 * MARGIN
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" '
        'stroke="#888"/>',
    ]
    if hasattr(data, "counts"):
        counts = np.asarray(data.counts, dtype=float)
        if counts.size == 0 or counts.sum() == 0:
            raise EmptyData("histogram has no counts")
        top = counts.max()
        w = pw / counts.size
        for k, c in enumerate(counts):
            if c <= 0:
                continue
            h = ph * c / top
            parts.append(f'<rect x="{_n(MARGIN + k * w)}" y="{_n(MARGIN + ph - h)}" '
                         f'width="{_n(w)}" height="{_n(h)}" fill="{color}"/>')
        xlabels = (data.lo, data.hi)
    else:
        xs, ys = (np.asarray(a, dtype=float) for a in data)
        if xs.size == 0 or xs.size != ys.size:
            raise EmptyData("trace is empty or ragged")
        x0, x1 = xs.min(), xs.max()
        y0, y1 = ys.min(), ys.max()
        sx = pw / (x1 - x0) if x1 > x0 else 0.0
        sy = ph / (y1 - y0) if y1 > y0 else 0.0
        px = MARGIN + (xs - x0) * sx
        py = MARGIN + ph - (ys - y0) * sy if sy else np.full(xs.size, MARGIN + ph / 2)
        pts = " ".join(f"{_n(a)},{_n(b)}" for a, b in zip(px, py))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                     'stroke-width="1"/>')
        xlabels = (x0, x1)
    parts.append(f'<text x="{MARGIN}" y="{HEIGHT - 20}" font-size="14">{xlabels[0]:.4g}</text>')
    parts.append(f'<text x="{WIDTH - MARGIN}" y="{HEIGHT - 20}" font-size="14" '
                 f'text-anchor="end">{xlabels[1]:.4g}</text>')
    if title:
        parts.append(f'<text x="{WIDTH / 2:.0f}" y="30" font-size="18" '
                     f'text-anchor="middle">{title}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
