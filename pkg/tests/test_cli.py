import re
import subprocess
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowfast import errors as E
from slowfast.cli import EXIT_CODES, exit_code_for, load_config, main, parse_sections, serialize
from slowfast.output import emit_svg, read_csv

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

HISTOGRAM = """\
[system]
builtin = expanding-sym
[run]
command = sim-histogram
steps = 100000
x0 = 0
y0 = 0.001
"""


def _write(tmp_path, text, name="run.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- parsing ----------------------------------------------------------------------------
def test_sections_keys_and_comments():
    sec = parse_sections("# top\n[system]\nbuiltin = markov-sym ; note\n[run]\ncommand=sim-histogram steps=5\n")
    assert sec["system"]["builtin"] == ("markov-sym", 3)
    assert sec["run"]["steps"] == ("5", 5)


def test_inline_pairs_after_header():
    cfg = load_config("[system] builtin=markov-asym epsilon=0.002\n[run] command=sim-histogram steps=10\n")
    assert cfg.system == {"builtin": "markov-asym", "epsilon": 0.002}
    assert cfg.params["steps"] == 10 and cfg.params["bins"] == 10_000


def test_one_line_sections():
    cfg = load_config("[system] builtin=expanding-sym\n[run] command=sim-histogram steps=1e7\n")
    assert cfg.command == "sim-histogram" and cfg.params["steps"] == 10**7


def test_duplicate_key_reports_its_line():
    with pytest.raises(E.ParseError) as info:
        parse_sections("[system]\nbuiltin = a\n\nbuiltin = b\n")
    assert info.value.line == 4 and info.value.column == 1


def test_garbage_reports_line_and_column():
    with pytest.raises(E.ParseError) as info:
        parse_sections("[run]\n  command = x  oops\n")
    assert (info.value.line, info.value.column) == (2, 16)


def test_negative_steps_are_a_range_error():
    with pytest.raises(E.RangeError, match="steps"):
        load_config(HISTOGRAM.replace("100000", "-5"))


@pytest.mark.parametrize("text, err", [
    (HISTOGRAM + "[plot]\nx = 1\n", E.UnknownKey),
    (HISTOGRAM.replace("x0 = 0", "x0 = 0\nwidth = 3"), E.UnknownKey),
    (HISTOGRAM.replace("builtin = expanding-sym", "builtin = iid-bessel\namplitude = 2"), E.UnknownKey),
    (HISTOGRAM.replace("command = sim-histogram\n", ""), E.MissingKey),
    (HISTOGRAM.replace("steps = 100000\n", ""), E.MissingKey),
    (HISTOGRAM.replace("builtin = expanding-sym", "builtin = expanding-sym\npolynomial = 1,2"), E.MissingKey),
    (HISTOGRAM.replace("expanding-sym", "lorenz"), E.RangeError),
    (HISTOGRAM.replace("100000", "ten"), E.RangeError),
])
def test_config_rejections(text, err):
    with pytest.raises(err):
        load_config(text)


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.cfg")), ids=lambda p: p.stem)
def test_shipped_configs_load_and_round_trip(path):
    cfg = load_config(path)
    assert load_config(serialize(cfg)) == cfg


@settings(max_examples=50, deadline=None)
@given(steps=st.integers(1, 10**9), x0=st.floats(-3, 3), bins=st.integers(1, 10**5),
       seed=st.integers(0, 2**64 - 1), svg=st.booleans(),
       eps=st.floats(1e-6, 0.999, exclude_max=True))
def test_round_trip(steps, x0, bins, seed, svg, eps):
    text = (f"[system]\nbuiltin = markov-sym\nepsilon = {eps!r}\n[run]\ncommand = sim-histogram\n"
            f"seed = {seed}\nsteps = {steps}\nx0 = {x0!r}\nbins = {bins}\n"
            f"[output]\nsvg = {'true' if svg else 'false'}\n")
    cfg = load_config(text)
    assert load_config(serialize(cfg)) == cfg
    assert cfg.seed == seed and cfg.params["x0"] == x0


# -- runs --------------------------------------------------------------------------------
def test_histogram_run_is_byte_reproducible(tmp_path):
    cfg = _write(tmp_path, HISTOGRAM)
    for d in ("a", "b"):
        assert main([str(cfg), "--out", str(tmp_path / d), "--seed", "7"]) == 0
    a = (tmp_path / "a" / "histogram.csv").read_bytes()
    assert a == (tmp_path / "b" / "histogram.csv").read_bytes()
    header, rows = read_csv(tmp_path / "a" / "histogram.csv")
    assert header == ["bin_lo", "bin_hi", "count"] and len(rows) == 10_000
    assert rows[:, 2].sum() + 0 <= 100_001
    summary = (tmp_path / "a" / "summary.txt").read_text()
    assert "# seed = 7" in summary and "wall_time_s" in summary


def test_exit_times_run_reports_slope(tmp_path):
    text = """\
[system]
builtin = iid-bessel
kappa = 0.1
[run]
command = exit-times
epsilons = 0.05,0.04,0.0333333333333333
replicas = 60
x0 = -1
basin = -2,0
cap = 1e6
[output]
svg = false
"""
    assert main([str(_write(tmp_path, text)), "--out", str(tmp_path / "o")]) == 0
    summary = (tmp_path / "o" / "summary.txt").read_text()
    slope = float(re.search(r"^slope = (\S+)", summary, re.M).group(1))
    assert 0.05 < slope < 0.15
    _, rows = read_csv(tmp_path / "o" / "exits.csv")
    assert rows.shape == (180, 5)


def test_svg_flag_writes_figure(tmp_path):
    assert main([str(_write(tmp_path, HISTOGRAM)), "--out", str(tmp_path / "s"), "--svg"]) == 0
    assert (tmp_path / "s" / "histogram.svg").read_text().startswith("<svg")


def test_errors_map_to_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, HISTOGRAM.replace("100000", "-5"))
    assert main([str(bad)]) == 1
    assert "RangeError" in capsys.readouterr().err
    eps = _write(tmp_path, HISTOGRAM.replace("expanding-sym", "expanding-sym\nepsilon = 2"), "e.cfg")
    assert main([str(eps), "--out", str(tmp_path / "e")]) == 3
    assert main([str(tmp_path / "missing.cfg")]) == 1


def test_exit_codes_are_distinct_and_listed():
    codes = [code for _, code, _ in EXIT_CODES]
    assert len(codes) == len(set(codes)) and 0 not in codes
    assert exit_code_for(E.TooFewGroups("x")) == 13 and exit_code_for(E.TooCensored("x")) == 14
    out = subprocess.run([sys.executable, "-m", "slowfast.cli", "--help"], capture_output=True,
                         text=True, check=True).stdout
    listed = [int(m) for m in re.findall(r"^\s+(\d+)\s{2}", out, re.M)]
    assert sorted(listed) == sorted([0] + codes)


# -- SVG ------------------------------------------------------------------------------
def test_histogram_svg_has_proportional_bars():
    h = SimpleNamespace(counts=np.array([0, 1, 2, 1, 0]), lo=-1.0, hi=1.0)
    svg = emit_svg(h)
    bars = re.findall(r'<rect x="[\d.]+" y="[\d.]+" width="[\d.]+" height="([\d.]+)" fill="#', svg)
    heights = [float(b) for b in bars]
    assert len(heights) == 3
    assert heights[1] == pytest.approx(2 * heights[0]) and heights[0] == pytest.approx(heights[2])


def test_trace_svg_is_one_polyline():
    svg = emit_svg((np.linspace(0, 1, 50), np.sin(np.linspace(0, 6, 50))), {"title": "t"})
    assert svg.count("<polyline") == 1 and svg.count(",") >= 49


def test_empty_plots_rejected():
    with pytest.raises(E.EmptyData):
        emit_svg(SimpleNamespace(counts=np.zeros(4), lo=0.0, hi=1.0))
    with pytest.raises(E.EmptyData):
        emit_svg((np.array([]), np.array([])))
