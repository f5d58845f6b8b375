import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from slowfast import RngStream, make_builtin
from slowfast.core import averaged_b1
from slowfast.errors import BlowUp, NeighborhoodsOverlap, TooCensored, TooFewGroups
from slowfast.simulate import (
    ExitSample,
    averaging_error_stat,
    exit_scaling_fit,
    exit_times,
    first_exit_time,
    histogram_two_pass,
    integrate_averaged,
    occupation_fraction_outside,
    orbit,
    run_occupation_histogram,
    step,
    transition_sequence,
)


@pytest.fixture(scope="module")
def still():
    """B identically zero."""
    return make_builtin("iid-bessel", b0=0.0, c=0.0, epsilon=0.01)


# -- step ------------------------------------------------------------------
def test_step_hand_arithmetic():
    x, y = step(make_builtin("expanding-sym"), 0.0, 0.25)
    assert x == pytest.approx(0.05, abs=1e-15)
    assert y == pytest.approx(0.75, abs=1e-15)


def test_fast_update_reads_the_old_slow_state():
    s = make_builtin("expanding-sym")
    x1, y1 = step(s, 0.3, 0.2)
    assert y1 == pytest.approx((3 * 0.2 + 0.3) % 1)
    assert x1 != 0.3


def test_zero_drift_keeps_x(still):
    rng = RngStream(0, 0)
    x, y = 0.42, 0.1
    for _ in range(100):
        x, y = step(still, x, y, rng)
    assert x == 0.42


def test_markov_step_law_is_uniform():
    s = make_builtin("markov-sym")
    rng = RngStream(5, 0)
    ys = np.array([step(s, 0.1, 0.3, rng)[1] for _ in range(100_000)])
    counts = np.histogram(ys, bins=25, range=(0, 1))[0]
    assert stats.chisquare(counts).pvalue > 1e-3


def test_expanding_orbits_are_bit_identical():
    s = make_builtin("expanding-asym")
    a = orbit(s, -2.0, 0.123, 50_000)
    b = orbit(s, -2.0, 0.123, 50_000)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_orbit_matches_repeated_step():
    s = make_builtin("markov-asym", epsilon=0.01)
    xs, ys = orbit(s, 0.5, 0.2, 300, rng=RngStream(9, 0))
    rng = RngStream(9, 0)
    x, y = 0.5, 0.2
    for k in range(300):
        x, y = step(s, x, y, rng)
        assert x == xs[k + 1] and y == ys[k + 1]


# -- histograms --------------------------------------------------------------
def test_zero_drift_histogram_is_one_bin(still):
    h = run_occupation_histogram(still, 0.123, 5000, bins=100, range=(-1, 1))
    assert h.total == 5001
    assert h.counts.max() == 5001
    assert h.centers[np.argmax(h.counts)] == pytest.approx(0.13, abs=0.011)


@pytest.mark.parametrize("name", ["markov-sym", "expanding-sym"])
def test_streaming_histogram_equals_two_pass(name):
    s = make_builtin(name)
    h = run_occupation_histogram(s, 0.3, 100_000, y0=0.2, seed=4)
    xs, _ = orbit(s, 0.3, 0.2, 100_000, seed=4)
    ref = histogram_two_pass(xs, 10_000, (-3, 3))
    assert np.array_equal(h.counts, ref.counts)
    assert h.out_of_range == ref.out_of_range


@settings(max_examples=25, deadline=None)
@given(n=st.integers(1, 20_000), lo=st.floats(-3, 0), width=st.floats(0.01, 4),
       bins=st.integers(1, 500))
def test_histogram_mass_conservation(n, lo, width, bins):
    s = make_builtin("markov-asym", epsilon=0.01)
    h = run_occupation_histogram(s, 0.2, n, bins=bins, range=(lo, lo + width), seed=1)
    assert h.counts.sum() + h.out_of_range == n + 1 == h.total


def test_post_exit_counting_skips_the_prefix():
    s = make_builtin("markov-sym", epsilon=0.01)
    full = run_occupation_histogram(s, 0.0, 20_000, bins=60, seed=3)
    cut = run_occupation_histogram(s, 0.0, 20_000, bins=60, seed=3, count_from_exit=(-0.5, 0.5))
    assert cut.skipped > 0
    assert cut.total == 20_001 - cut.skipped
    assert np.all(cut.counts <= full.counts)


# -- averaged motion -----------------------------------------------------------
def test_averaged_path_stays_at_fixed_point():
    p = integrate_averaged(averaged_b1, 2.0, 5.0, 0.01)
    assert np.all(p.points == 2.0)


def test_averaged_path_decreases_from_half():
    assert averaged_b1(0.5) == pytest.approx(-1.40625)
    p = integrate_averaged(averaged_b1, 0.5, 3.0, 0.01)
    assert np.all(np.diff(p.points) < 0)
    assert 0 < p.points[-1] < 0.5


def test_rk4_step_halving():
    a = integrate_averaged(averaged_b1, 0.5, 10.0, 0.01).points[-1]
    b = integrate_averaged(averaged_b1, 0.5, 10.0, 0.005).points[-1]
    assert abs(a - b) < 1e-8


def test_blow_up_detected():
    with pytest.raises(BlowUp):
        integrate_averaged(lambda x: x * x, 1.0, 5.0, 0.01, domain=(-3, 3))


def test_fluctuation_free_drift_tracks_averaged_recursion():
    s = make_builtin("iid-bessel", kappa=0.1, c=0.0, epsilon=1e-3)
    st_ = averaging_error_stat(s, lambda x: 0.1 * x * (1 - x * x), 0.3, 1.0, 5,
                               reference="recursion")
    assert np.max(st_.deviations) <= 1e-6


def test_averaging_error_shrinks_with_epsilon():
    s = make_builtin("markov-sym")
    med = [averaging_error_stat(s.with_epsilon(e), averaged_b1, 0.5, 1.0, 200, seed=1)
           .quantiles[0.5] for e in (1e-2, 1e-3)]
    assert med[1] < med[0]


def test_zero_drift_doubling_converges_in_measure():
    s = make_builtin("zero-drift-doubling")
    st_ = averaging_error_stat(s, lambda x: 0.0, 0.0, 1.0, 200, seed=2, delta=0.1)
    assert st_.exceedance < 0.05
    assert set(st_.quantiles) == {0.5, 0.9, 0.99}


# -- exit times ----------------------------------------------------------------
def test_start_outside_exits_immediately(iid):
    e = first_exit_time(iid, 0.5, (-2.0, 0.0), 10.0)
    assert e.tau_slow == 0.0 and e.exit_point == 0.5 and not e.censored


def test_censoring_contract(iid):
    e = first_exit_time(iid, -1.0, (-2.0, 0.0), 0.05)
    assert e.censored and e.tau_slow == 0.05


def test_default_cap_needs_estimate(iid):
    with pytest.raises(ValueError):
        first_exit_time(iid, -1.0, (-2.0, 0.0))
    e = first_exit_time(iid, -1.0, (-2.0, 0.0), R_hat=1e-9)
    assert e.tau_slow <= 10.0 * math.exp(1e-9 / iid.epsilon) + 1e-12


@settings(max_examples=20, deadline=None)
@given(y0=st.floats(0, 1, exclude_max=True), grow=st.floats(0.0, 0.5))
def test_enlarging_the_region_never_shortens_exit(y0, grow):
    s = make_builtin("expanding-sym", epsilon=0.01)
    small = first_exit_time(s, 0.0, (-0.4, 0.4), 50.0, y0=y0)
    large = first_exit_time(s, 0.0, (-0.4 - grow, 0.4 + grow), 50.0, y0=y0)
    assert large.tau_slow >= small.tau_slow


def test_mean_exit_grows_as_epsilon_shrinks():
    means = []
    for inv in (20, 30, 40):
        s = make_builtin("iid-bessel", kappa=0.1, epsilon=1 / inv)
        taus = [e.tau_slow for e in exit_times(s, -1.0, (-2.0, 0.0), 200, 1e5, seed=8)]
        means.append(np.mean(taus))
    assert means[0] < means[1] < means[2]


def test_replica_order_does_not_matter(iid):
    fwd = exit_times(iid, -1.0, (-2.0, 0.0), 30, 1e4, seed=3)
    rev = [first_exit_time(iid, -1.0, (-2.0, 0.0), 1e4, seed=3, replica=r)
           for r in reversed(range(30))]
    assert sorted(e.tau_slow for e in fwd) == sorted(e.tau_slow for e in rev)
    assert np.mean([e.tau_slow for e in fwd]) == pytest.approx(np.mean([e.tau_slow for e in rev[::-1]]), abs=0)


def _synthetic(slope, noise=0.0, n=200, seed=0):
    g = np.random.default_rng(seed)
    out = []
    for eps in (1 / 20, 1 / 30, 1 / 40, 1 / 50):
        for r in range(n):
            tau = math.exp(slope / eps) * (math.exp(noise * g.standard_normal()) if noise else 1)
            out.append(ExitSample(eps, r, tau, False, 0.0))
    return out


def test_fit_exact_exponential():
    f = exit_scaling_fit(_synthetic(0.08, n=3))
    assert f.slope == pytest.approx(0.08, rel=1e-10)
    assert f.r2 == pytest.approx(1.0, abs=1e-12)


def test_fit_with_lognormal_noise():
    f = exit_scaling_fit(_synthetic(0.08, noise=0.1, seed=5))
    assert abs(f.slope - 0.08) <= 0.05 * 0.08


def test_fit_needs_three_groups():
    one = [ExitSample(0.05, r, 1.0, False, 0.0) for r in range(10)]
    with pytest.raises(TooFewGroups):
        exit_scaling_fit(one)
    with pytest.raises(TooCensored):
        exit_scaling_fit(one)


def test_fit_rejects_censored_groups():
    s = _synthetic(0.08, n=10)
    s[0] = ExitSample(s[0].epsilon, 0, s[0].tau_slow, True, 0.0)
    with pytest.raises(TooCensored):
        exit_scaling_fit(s)
    f = exit_scaling_fit(s, max_censored=0.2)
    g = {grp.epsilon: grp for grp in f.groups}
    assert g[1 / 20].n_censored == 1
    assert sum(grp.n_censored for grp in f.groups) == 1


# -- boundary chain ---------------------------------------------------------------
def test_first_hop_from_minus_two_lands_at_zero():
    s = make_builtin("markov-asym")
    for seed in range(3):
        log = transition_sequence(s, [-2.0, 0.0, 2.0], 0.2, 1, -2.0, seed=seed)
        assert log.entries[0].attractor == 1


def test_overlapping_neighbourhoods_rejected(markov_sym):
    with pytest.raises(NeighborhoodsOverlap):
        transition_sequence(markov_sym, [-2.0, 0.0, 2.0], 1.1, 5, 0.0)
    with pytest.raises(NeighborhoodsOverlap):
        transition_sequence(markov_sym, [-2.0, 0.0, 2.0], 0.6, 5, 0.0)


def test_transition_log_consistency():
    s = make_builtin("markov-sym")
    log = transition_sequence(s, [-2.0, 0.0, 2.0], 0.2, 50, 0.0, seed=1)
    assert log.complete and len(log.entries) == 50
    idx = [log.initial] + [e.attractor for e in log.entries]
    assert all(a != b for a, b in zip(idx, idx[1:]))
    assert all(e.sojourn > 0 for e in log.entries)
    assert sum(e.sojourn for e in log.entries) == pytest.approx(log.span, rel=1e-12)
    assert np.all(np.diff([e.entry_time for e in log.entries]) > 0)


def test_step_budget_returns_partial_log(markov_sym):
    log = transition_sequence(markov_sym, [-2.0, 0.0, 2.0], 0.2, 10**6, 0.0, max_steps=5000)
    assert not log.complete and log.steps == 5000


# -- occupation outside the attractor neighbourhood --------------------------------
def test_no_drift_means_no_time_away(still):
    frac, s = occupation_fraction_outside(still, 0.0, (-1, 1), 0.1, 0.0, 10.0)
    assert frac == 0.0 and s.censored


def test_time_away_shrinks_when_epsilon_halves():
    fr = []
    for inv in (20, 40):
        s = make_builtin("iid-bessel", kappa=0.1, epsilon=1 / inv)
        fr.append(np.mean([occupation_fraction_outside(s, -1.0, (-2, 0), 0.5, -1.0, 1e5,
                                                       seed=2, replica=r)[0]
                           for r in range(50)]))
    assert fr[1] < fr[0]


@pytest.mark.xfail(strict=True, reason="barriers of the amplitude-50 example are ~1e-3, "
                   "so there is no metastability at this epsilon; measured fraction ~0.56")
def test_markov_sym_time_away_from_zero_is_small():
    s = make_builtin("markov-sym", epsilon=5e-3)
    fr = [occupation_fraction_outside(s, 0.0, (-1, 1), 0.25, 0.0, 200.0, seed=1, replica=r)[0]
          for r in range(20)]
    assert np.mean(fr) < 0.1
