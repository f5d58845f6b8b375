"""Command-line front end: ``slowfast <config> [--seed N] [--out DIR] [--svg]``.

A config is a flat, sectioned key=value file::

    [system]
    builtin = expanding-sym
    [run]
    command = sim-histogram
    steps = 1e7
    [output]
    dir = out

Several ``key=value`` pairs may share a line (separated by spaces), and a
section header may be followed by pairs on the same line.  ``#`` and ``;``
start comments.
"""
from __future__ import annotations

import argparse
import math
import re
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import errors as E
from .core import exact_bbar, make_builtin, make_polynomial, validate_system
from .output import emit_svg, write_csv

COMMANDS = ("sim-histogram", "averaging-check", "exit-times", "rate-tables",
            "quasipotential", "predict-occupation", "boundary-chain", "resonance")

# Exit codes, most specific class first.  Config errors share status 1.
EXIT_CODES = [
    (E.ConfigError, 1, "configuration error (parse, unknown/missing key, range)"),
    (E.NoConvergence, 2, "numerical nonconvergence"),
    (E.BadEpsilon, 3, "epsilon outside (0, 1)"),
    (E.NonStochasticRow, 4, "kernel row does not sum to 1"),
    (E.NegativeDensity, 5, "negative density"),
    (E.BoundViolated, 6, "declared drift bound violated"),
    (E.UnknownName, 7, "unknown built-in or driver name"),
    (E.ValidationError, 8, "other system validation failure"),
    (E.BetaOutOfBracket, 9, "beta outside [-b_max, b_max]"),
    (E.BlowUp, 10, "trajectory blow-up"),
    (E.OutOfTableRange, 11, "x outside the rate-table range"),
    (E.TableGap, 12, "rate tables do not cover the grid"),
    (E.TooFewGroups, 13, "fewer than three epsilon groups"),
    (E.TooCensored, 14, "too many censored exit replicas"),
    (E.NeighborhoodsOverlap, 15, "attractor neighbourhoods overlap"),
    (E.NoAttractors, 16, "averaged drift has no attractor"),
    (E.DegenerateZero, 17, "degenerate zero of the averaged drift"),
    (E.TooLarge, 18, "too many attractors for i-graph enumeration"),
    (E.AllInfinite, 19, "every i-graph weight is zero"),
    (E.NoRoot, 20, "no crossing level"),
    (E.RhoAboveMerge, 21, "rho above the merge level"),
    (E.SignViolation, 22, "averaged slow drift changes sign"),
    (E.TooFewReversals, 23, "too few direction reversals"),
    (E.EmptyData, 24, "nothing to plot"),
    (E.SlowFastError, 25, "other slowfast error"),
]


def exit_code_for(exc):
    for cls, code, _ in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 25


# ---------------------------------------------------------------------------
# schema
# ---------------------------------------------------------------------------
REQ = object()


def _num(text):
    try:
        return float(text)
    except ValueError:
        raise E.ConfigError(f"not a number: {text!r}") from None


def _int(text):
    try:
        return int(text)  # exact for large seeds
    except ValueError:
        pass
    v = _num(text)
    if not math.isfinite(v) or v != int(v):
        raise E.ConfigError(f"not an integer: {text!r}")
    return int(v)


def _floats(text):
    return [_num(t) for t in text.split(",") if t.strip()]


def _bool(text):
    t = text.lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise E.ConfigError(f"not a boolean: {text!r}")


def _y0(text):
    return text if text in ("uniform", "uniform-random") else _num(text)


def _str(text):
    return text


@dataclass(frozen=True)
class Key:
    parse: object
    default: object = None
    check: object = None  # callable(value) -> error message or None

    @property
    def required(self):
        return self.default is REQ


def _positive(v):
    return None if v > 0 else "must be positive"


def _at_least_one(v):
    return None if v >= 1 else "must be >= 1"


def _pair(v):
    return None if len(v) == 2 and v[0] < v[1] else "must be two increasing numbers"


def _nonempty(v):
    return None if len(v) else "must list at least one value"


def _one_of(*choices):
    return lambda v: None if v in choices else f"must be one of {', '.join(choices)}"


SYSTEM_KEYS = {
    "builtin": Key(_str, None, _one_of("expanding-sym", "expanding-asym", "markov-sym",
                                        "markov-asym", "zero-drift-doubling", "iid-bessel",
                                        "three-scale")),
    "polynomial": Key(_floats, None, _nonempty),
    "epsilon": Key(_num),
    "amplitude": Key(_num),
    "c": Key(_num),
    "kappa": Key(_num),
    "b0": Key(_num),
    "domain": Key(_floats, None, _pair),
    "driver": Key(_str, None, _one_of("additive-uniform", "expanding")),
    "multiplier": Key(_int, None, lambda v: None if v >= 2 else "must be >= 2"),
    "variant": Key(_str, None, _one_of("paper", "designed")),
    "rho": Key(_num, None, _positive),
    "sigma": Key(_num),
    "a": Key(_num),
}

SYSTEM_PARAMS = {
    "expanding-sym": {"epsilon", "amplitude"},
    "expanding-asym": {"epsilon", "amplitude"},
    "markov-sym": {"epsilon", "amplitude"},
    "markov-asym": {"epsilon", "amplitude"},
    "zero-drift-doubling": {"epsilon"},
    "iid-bessel": {"epsilon", "c", "kappa", "b0", "domain"},
    "three-scale": {"variant", "epsilon", "rho", "kappa", "c", "a", "sigma"},
    None: {"epsilon", "amplitude", "driver", "multiplier", "domain"},  # polynomial
}

RUN_KEYS = {
    "sim-histogram": {
        "steps": Key(_int, REQ, _at_least_one),
        "x0": Key(_num, 0.0),
        "y0": Key(_y0),
        "bins": Key(_int, 10_000, _at_least_one),
        "range": Key(_floats, [-3.0, 3.0], _pair),
    },
    "averaging-check": {
        "T": Key(_num, REQ, _positive),
        "replicas": Key(_int, 200, _at_least_one),
        "x0": Key(_num, 0.5),
        "y0": Key(_y0),
        "delta": Key(_num, 0.1, _positive),
        "epsilons": Key(_floats, None, _nonempty),
        "reference": Key(_str, "ode", _one_of("ode", "recursion")),
    },
    "exit-times": {
        "epsilons": Key(_floats, REQ, _nonempty),
        "replicas": Key(_int, REQ, _at_least_one),
        "x0": Key(_num, REQ),
        "basin": Key(_floats, REQ, _pair),
        "cap": Key(_num, None, _positive),
        "r_hat": Key(_num, None, _positive),
        "cap_factor": Key(_num, 10.0, _positive),
        "y0": Key(_y0),
    },
    "rate-tables": {
        "x": Key(_floats, REQ, _nonempty),
        "n_y": Key(_int, 512, lambda v: None if v >= 8 else "must be >= 8"),
        "b_max": Key(_num, None, _positive),
        "n_beta": Key(_int, 241, lambda v: None if v >= 3 else "must be >= 3"),
        "n_alpha": Key(_int, 201, lambda v: None if v >= 2 else "must be >= 2"),
    },
    "quasipotential": {
        "n_grid": Key(_int, 600, lambda v: None if v >= 64 else "must be >= 64"),
        "n_y": Key(_int, 256, lambda v: None if v >= 8 else "must be >= 8"),
        "b_max": Key(_num, None, _positive),
        "method": Key(_str, "both", _one_of("dp", "hj", "both")),
    },
    "predict-occupation": {
        "n_grid": Key(_int, 600, lambda v: None if v >= 64 else "must be >= 64"),
        "n_y": Key(_int, 256, lambda v: None if v >= 8 else "must be >= 8"),
        "b_max": Key(_num, None, _positive),
        "method": Key(_str, "dp", _one_of("dp", "hj")),
        "epsilon": Key(_num, None, _positive),
    },
    "boundary-chain": {
        "delta": Key(_num, REQ, _positive),
        "transitions": Key(_int, REQ, _at_least_one),
        "x0": Key(_num),
        "y0": Key(_y0),
        "max_steps": Key(_int, 10**9, _at_least_one),
        "compare_q": Key(_bool, True),
        "n_y": Key(_int, 128, lambda v: None if v >= 8 else "must be >= 8"),
    },
    "resonance": {
        "steps": Key(_int, REQ, _at_least_one),
        "subsample": Key(_int, 1000, _at_least_one),
        "v0": Key(_num, 0.0),
        "x0": Key(_num, -1.0),
        "y0": Key(_y0),
        "v_grid": Key(_int, 39, lambda v: None if v >= 5 else "must be >= 5"),
    },
}

OUTPUT_KEYS = {"dir": Key(_str, "out"), "svg": Key(_bool, False)}


@dataclass
class RunConfig:
    command: str
    system: dict
    params: dict
    seed: int = 0
    output_dir: str = "out"
    emit_svg: bool = False
    raw: dict = field(default_factory=dict, compare=False, repr=False)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------
_PAIR = re.compile(r'\s*([A-Za-z_][\w-]*)\s*=\s*("[^"]*"|[^\s"]+)\s*')
_HEADER = re.compile(r"\s*\[\s*([A-Za-z_][\w-]*)\s*\]")


def _strip_comment(line):
    for mark in ("#", ";"):
        k = line.find(mark)
        if k >= 0:
            line = line[:k]
    return line


def parse_sections(text):
    """``{section: {key: (value_text, line)}}`` with line/column parse errors."""
    sections = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).rstrip()
        pos = 0
        m = _HEADER.match(line)
        if m:
            current = m.group(1)
            if current in sections:
                raise E.ParseError(f"section [{current}] repeated", lineno, m.start(1) + 1)
            sections[current] = {}
            pos = m.end()
        while pos < len(line):
            if not line[pos:].strip():
                break
            m = _PAIR.match(line, pos)
            if not m:
                col = pos + len(line[pos:]) - len(line[pos:].lstrip()) + 1
                raise E.ParseError("expected key=value", lineno, col)
            if current is None:
                raise E.ParseError("key=value before any [section]", lineno, m.start(1) + 1)
            key, val = m.group(1), m.group(2).strip('"')
            if key in sections[current]:
                raise E.ParseError(f"duplicate key {key!r}", lineno, m.start(1) + 1)
            sections[current][key] = (val, lineno)
            pos = m.end()
    return sections


def _typed(section, items, schema):
    out = {}
    for key, (text, lineno) in items.items():
        spec = schema.get(key)
        if spec is None:
            raise E.UnknownKey(f"[{section}] line {lineno}: unknown key {key!r}")
        try:
            v = spec.parse(text)
        except E.ConfigError as exc:
            raise E.RangeError(f"[{section}] line {lineno}: {key}: {exc}") from None
        if spec.check is not None:
            msg = spec.check(v)
            if msg:
                raise E.RangeError(f"[{section}] line {lineno}: {key}={text} {msg}")
        out[key] = v
    for key, spec in schema.items():
        if key not in out:
            if spec.required:
                raise E.MissingKey(f"[{section}] missing required key {key!r}")
            if spec.default is not None:
                out[key] = spec.default
    return out


def load_config(source):
    """Parse a config from a path or from config text."""
    if isinstance(source, Path) or ("\n" not in source and Path(source).is_file()):
        text = Path(source).read_text()
    else:
        text = source
    sec = parse_sections(text)
    for name in sec:
        if name not in ("system", "run", "output"):
            raise E.UnknownKey(f"unknown section [{name}]")
    if "system" not in sec:
        raise E.MissingKey("missing [system] section")
    if "run" not in sec or "command" not in sec["run"]:
        raise E.MissingKey("missing [run] command")
    run = dict(sec["run"])
    command, lineno = run.pop("command")
    if command not in COMMANDS:
        raise E.RangeError(f"[run] line {lineno}: unknown command {command!r}")
    seed_text = run.pop("seed", None)
    seed = 0
    if seed_text is not None:
        try:
            seed = _int(seed_text[0])
        except E.ConfigError as exc:
            raise E.RangeError(f"[run] line {seed_text[1]}: seed: {exc}") from None
        if seed < 0 or seed >= 2**64:
            raise E.RangeError(f"[run] line {seed_text[1]}: seed must fit in 64 bits")
    system = _typed("system", sec["system"], SYSTEM_KEYS)
    has_b, has_p = "builtin" in system, "polynomial" in system
    if has_b == has_p:
        raise E.MissingKey("[system] needs exactly one of 'builtin' or 'polynomial'")
    allowed = SYSTEM_PARAMS[system.get("builtin")]
    for key in system:
        if key not in allowed and key not in ("builtin", "polynomial"):
            who = system.get("builtin", "polynomial")
            raise E.UnknownKey(f"[system] key {key!r} does not apply to {who}")
    params = _typed("run", run, RUN_KEYS[command])
    out = _typed("output", sec.get("output", {}), OUTPUT_KEYS)
    return RunConfig(command, system, params, seed, out["dir"], out["svg"])


def _ser(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ",".join(_ser(float(x)) for x in v)
    return str(v)


def serialize(config):
    """Config text that :func:`load_config` maps back to an equal RunConfig."""
    lines = ["[system]"]
    lines += [f"{k} = {_ser(v)}" for k, v in config.system.items()]
    lines += ["[run]", f"command = {config.command}", f"seed = {config.seed}"]
    lines += [f"{k} = {_ser(v)}" for k, v in config.params.items()]
    lines += ["[output]", f"dir = {config.output_dir}", f"svg = {_ser(config.emit_svg)}"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# system construction
# ---------------------------------------------------------------------------
def build_system(system_cfg):
    cfg = dict(system_cfg)
    if "polynomial" in cfg:
        coeffs = cfg.pop("polynomial")
        if "domain" in cfg:
            cfg["domain"] = tuple(cfg["domain"])
        return validate_system(make_polynomial(coeffs, **cfg))
    name = cfg.pop("builtin")
    if "domain" in cfg:
        cfg["domain"] = tuple(cfg["domain"])
    spec = make_builtin(name, **cfg)
    return spec if name == "three-scale" else validate_system(spec)


def _bbar_rule(system, n_y=256):
    b = exact_bbar(system)
    if b is not None:
        return lambda x: float(b(x))
    from .rate import averaged_drift

    return lambda x: averaged_drift(system, x, n_y)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------
def _cmd_sim_histogram(cfg, system, out, summary, svgs):
    from .simulate import run_occupation_histogram

    p = cfg.params
    h = run_occupation_histogram(system, p["x0"], p["steps"], bins=p["bins"],
                                 range=tuple(p["range"]), y0=p.get("y0"), seed=cfg.seed)
    e = h.edges
    write_csv(out / "histogram.csv", ["bin_lo", "bin_hi", "count"],
              zip(e[:-1], e[1:], h.counts))
    summary["total"] = h.total
    summary["out_of_range"] = h.out_of_range
    try:
        from .quasipotential import find_attractors

        A = find_attractors(_bbar_rule(system), system.slow_domain)
        summary["attractors"] = ",".join(format(a, ".6g") for a in A.attractors)
        summary["mass_within_0.3_of_attractors"] = h.mass_near(A.attractors, 0.3)
    except E.SlowFastError:
        pass
    svgs["histogram.svg"] = (h, {"title": f"{system.name} occupation"})


def _cmd_averaging_check(cfg, system, out, summary, svgs):
    from .simulate import averaging_error_stat

    p = cfg.params
    bbar = _bbar_rule(system)
    rows = []
    for eps in p.get("epsilons") or [system.epsilon]:
        s = averaging_error_stat(system.with_epsilon(eps), bbar, p["x0"], p["T"],
                                 p["replicas"], seed=cfg.seed, y0=p.get("y0"),
                                 delta=p["delta"], reference=p["reference"])
        rows.append((eps, s.quantiles[0.5], s.quantiles[0.9], s.quantiles[0.99],
                     s.exceedance))
        summary[f"median_deviation[eps={eps:g}]"] = s.quantiles[0.5]
    write_csv(out / "averaging.csv", ["epsilon", "q50", "q90", "q99", "exceedance"], rows)


def _cmd_exit_times(cfg, system, out, summary, svgs):
    from .simulate import exit_scaling_fit, exit_times

    p = cfg.params
    samples = []
    for eps in p["epsilons"]:
        cap = p.get("cap")
        if cap is None:
            if "r_hat" not in p:
                raise E.MissingKey("[run] exit-times needs 'cap' or 'r_hat'")
            cap = p["cap_factor"] * math.exp(p["r_hat"] / eps)
        samples += exit_times(system.with_epsilon(eps), p["x0"], tuple(p["basin"]),
                              p["replicas"], cap_slow_time=cap, seed=cfg.seed, y0=p.get("y0"))
    write_csv(out / "exits.csv", ["epsilon", "replica", "tau_slow", "censored", "exit_x"],
              ((s.epsilon, s.replica, s.tau_slow, s.censored, s.exit_point) for s in samples))
    summary["replicas"] = len(samples)
    summary["censored"] = sum(s.censored for s in samples)
    if len(p["epsilons"]) >= 3:
        fit = exit_scaling_fit(samples)
        summary["slope"] = fit.slope
        summary["intercept"] = fit.intercept
        summary["r2"] = fit.r2
        summary["censoring_flagged"] = fit.flagged


def _cmd_rate_tables(cfg, system, out, summary, svgs):
    from .rate import rate_table

    p = cfg.params
    hrows, lrows = [], []
    for x in p["x"]:
        t = rate_table(system, x, n_y=p["n_y"], b_max=p.get("b_max"), n_beta=p["n_beta"],
                       n_alpha=p["n_alpha"])
        hrows += [(x, b, h) for b, h in zip(t.beta_grid, t.H_values)]
        lrows += [(x, a, l, bs, f) for a, l, bs, f in
                  zip(t.alpha_grid, t.L_values, t.beta_star, t.L_finite)]
        summary[f"bbar[x={x:g}]"] = t.bbar
        summary["provenance"] = t.provenance
    write_csv(out / "rate_H.csv", ["x", "beta", "H"], hrows)
    write_csv(out / "rate_L.csv", ["x", "alpha", "L", "beta_star", "finite"], lrows)


def _structure(cfg, system, method):
    from .quasipotential import find_attractors, transition_matrix
    from .rate import RateModel

    p = cfg.params
    rates = RateModel(system, n_y=p["n_y"], b_max=p.get("b_max"))
    A = find_attractors(rates.bbar, system.slow_domain)
    return rates, A, transition_matrix(A, rates, method, n_grid=p["n_grid"])


def _write_Rij(path, T):
    rows = [(i, j, T.R[i, j]) for i in range(T.ell) for j in range(T.ell) if i != j]
    write_csv(path, ["i", "j", "R_ij"], rows)


def _cmd_quasipotential(cfg, system, out, summary, svgs):
    from .quasipotential import dp_edge_costs, grid_with_nodes, quasipotential_dp

    p = cfg.params
    methods = ["dp", "hj"] if p["method"] == "both" else [p["method"]]
    rates = A = None
    for m in methods:
        rates, A, T = _structure(cfg, system, m)
        _write_Rij(out / f"R_ij_{m}.csv", T)
        for i, Ri in enumerate(T.R_i):
            summary[f"R_{i}[{m}]"] = Ri
    summary["attractors"] = ",".join(format(a, ".6g") for a in A.attractors)
    summary["separators"] = ",".join(format(s, ".6g") for s in A.separators)
    if "dp" in methods:
        lo, hi = system.slow_domain
        grid = grid_with_nodes(lo, hi, p["n_grid"], list(A.attractors) + list(A.separators))
        edges = dp_edge_costs(rates, grid)
        for i, a in enumerate(A.attractors):
            f = quasipotential_dp(rates, a, grid, edges=edges)
            write_csv(out / f"R_from_{i}.csv", ["x", "R"], zip(f.grid, f.R),
                      preamble=[f"source={a!r}"])


def _cmd_predict_occupation(cfg, system, out, summary, svgs):
    from .quasipotential import igraph_weights

    p = cfg.params
    eps = p.get("epsilon", system.epsilon)
    _, A, T = _structure(cfg, system, p["method"])
    W = igraph_weights(T.R, eps)
    _write_Rij(out / "R_ij.csv", T)
    write_csv(out / "Q.csv", ["i", "Q_i", "prediction_i", "log_Q_i"],
              ((i, math.exp(W.log_Q[i]), W.prediction[i], W.log_Q[i]) for i in range(T.ell)),
              preamble=[f"epsilon={eps!r}"])
    for i, q in enumerate(W.prediction):
        summary[f"prediction_{i}"] = q


def _cmd_boundary_chain(cfg, system, out, summary, svgs):
    from .quasipotential import find_attractors, igraph_weights, transition_matrix
    from .rate import RateModel
    from .simulate import transition_sequence

    p = cfg.params
    rates = RateModel(system, n_y=p["n_y"])
    A = find_attractors(rates.bbar, system.slow_domain)
    x0 = p.get("x0", float(A.attractors[0]))
    log = transition_sequence(system, A.attractors, p["delta"], p["transitions"], x0,
                              y0=p.get("y0"), seed=cfg.seed, max_steps=p["max_steps"])
    write_csv(out / "transitions.csv", ["k", "attractor", "entry_time", "sojourn"],
              ((e.k, e.attractor, e.entry_time, e.sojourn) for e in log.entries))
    summary["transitions"] = len(log.entries)
    summary["complete"] = log.complete
    fr = log.time_fractions(A.ell)
    for i, f in enumerate(fr):
        summary[f"time_fraction_{i}"] = f
    if p["compare_q"] and A.ell >= 2:
        W = igraph_weights(transition_matrix(A, rates, "hj").R, system.epsilon)
        for i, q in enumerate(W.prediction):
            summary[f"q_prediction_{i}"] = q


def _cmd_resonance(cfg, system, out, summary, svgs):
    from .resonance import (barrier_rules, crossing_levels, designed_barriers,
                            empirical_period, predicted_period, run_three_scale)

    p = cfg.params
    spec = system
    run = run_three_scale(spec, p["v0"], p["x0"], p.get("y0"), p["steps"], p["subsample"],
                          seed=cfg.seed)
    write_csv(out / "trace.csv", ["t", "V"], zip(run.times, run.V))
    T_emp = math.nan
    try:
        pe = empirical_period(run.V, dt=run.times[1] - run.times[0])
        T_emp = pe.period
        write_csv(out / "reversals.csv", ["k", "reversal_time", "direction"],
                  ((k, t, d) for k, (t, d) in enumerate(zip(pe.reversal_times, pe.directions))))
        summary["phases"] = pe.n_phases
    except E.TooFewReversals as exc:
        summary["phases"] = f"n/a ({exc})"
    vm = vp = T_pred = math.nan
    if "kappa" in spec.params:
        vg = np.linspace(-0.95, 0.95, p["v_grid"])
        R12, R21 = barrier_rules(vg, *designed_barriers(spec, vg))
        cl = crossing_levels(R12, R21, spec.rho, bracket=(vg[0], vg[-1]))
        vm, vp = cl.v_minus, cl.v_plus
        T_pred = predicted_period(*spec.A_bar, vm, vp)
    write_csv(out / "resonance_summary.csv", ["rho", "v_minus", "v_plus", "T_pred", "T_emp"],
              [(spec.rho, vm, vp, T_pred, T_emp)])
    summary["T_pred"] = T_pred
    summary["T_emp"] = T_emp
    svgs["trace.svg"] = ((run.times, run.V), {"title": "slowest variable"})


DISPATCH = {
    "sim-histogram": _cmd_sim_histogram,
    "averaging-check": _cmd_averaging_check,
    "exit-times": _cmd_exit_times,
    "rate-tables": _cmd_rate_tables,
    "quasipotential": _cmd_quasipotential,
    "predict-occupation": _cmd_predict_occupation,
    "boundary-chain": _cmd_boundary_chain,
    "resonance": _cmd_resonance,
}


def run_command(config):
    """Run one configured command; returns ``(output_dir, summary dict)``."""
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    system = build_system(config.system)
    summary, svgs = {}, {}
    t0 = time.perf_counter()
    DISPATCH[config.command](config, system, out, summary, svgs)
    wall = time.perf_counter() - t0
    if config.emit_svg:
        for name, (data, style) in svgs.items():
            (out / name).write_text(emit_svg(data, style))
    lines = ["# config"] + ["# " + ln for ln in serialize(config).splitlines()]
    lines += [f"{k} = {v:.17g}" if isinstance(v, float) else f"{k} = {v}"
              for k, v in summary.items()]
    lines.append(f"wall_time_s = {wall:.3f}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    return out, summary


def _help_epilog():
    rows = [f"  {code:>2}  {desc}" for _, code, desc in EXIT_CODES]
    return "exit status:\n   0  success\n" + "\n".join(rows)


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="slowfast",
        description="Slow-fast simulation and large-deviation toolkit.",
        epilog=_help_epilog(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    ap.add_argument("config", help="sectioned key=value config file")
    ap.add_argument("--seed", type=int, help="master seed (overrides [run] seed)")
    ap.add_argument("--out", help="output directory (overrides [output] dir)")
    ap.add_argument("--svg", action="store_true", help="also write SVG figures")
    args = ap.parse_args(argv)
    try:
        cfg = load_config(Path(args.config))
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.output_dir = args.out
        if args.svg:
            cfg.emit_svg = True
        out, summary = run_command(cfg)
    except OSError as exc:
        print(f"slowfast: {exc}", file=sys.stderr)
        return 1
    except E.SlowFastError as exc:
        code = exit_code_for(exc)
        print(f"slowfast: {type(exc).__name__}: {exc}", file=sys.stderr)
        return code
    for k, v in summary.items():
        print(f"{k} = {v}")
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
