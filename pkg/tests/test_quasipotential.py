import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slowfast import make_builtin
from slowfast.core import averaged_b1, averaged_b2
from slowfast.errors import AllInfinite, DegenerateZero, NoAttractors, TooLarge
from slowfast.quasipotential import (
    default_speed_grid,
    enumerate_igraphs,
    find_attractors,
    grid_with_nodes,
    hj_root_quasipotential,
    igraph_weights,
    momentum_root,
    predict_exit_time,
    quasipotential_dp,
    transition_matrix,
)
from slowfast.rate import RateModel


@pytest.fixture(scope="module")
def iid_rates():
    return RateModel(make_builtin("iid-bessel", kappa=0.1))


@pytest.fixture(scope="module")
def sym_R():
    rm = RateModel(make_builtin("markov-sym"))
    A = find_attractors(averaged_b1, (-3, 3))
    return transition_matrix(A, rm).R, transition_matrix(A, rm, method="hj").R


@pytest.fixture(scope="module")
def asym_R():
    rm = RateModel(make_builtin("markov-asym"))
    return transition_matrix(find_attractors(averaged_b2, (-3, 3)), rm).R


# -- attractors -------------------------------------------------------------------------
def test_attractors_of_the_symmetric_drift():
    A = find_attractors(averaged_b1, (-3, 3))
    assert np.allclose(A.attractors, [-2, 0, 2], atol=1e-10)
    assert np.allclose(A.separators, [-1, 1], atol=1e-10)
    assert A.basin_of(0.4) == 1 and A.basin_of(-2.9) == 0


def test_attractors_of_the_asymmetric_drift():
    A = find_attractors(averaged_b2, (-3, 3))
    assert np.allclose(A.attractors, [-2, 0, 2], atol=1e-10)
    assert np.allclose(A.separators, [-1.5, 1], atol=1e-10)


def test_constant_drift_has_no_attractors():
    with pytest.raises(NoAttractors):
        find_attractors(lambda x: np.ones_like(x), (-3, 3))


def test_tangential_zero_is_rejected():
    with pytest.raises(DegenerateZero):
        find_attractors(lambda x: -(x ** 3), (-1, 1.3))


# -- DP quasipotential ---------------------------------------------------------------------
def test_dp_is_zero_at_its_source(iid_rates):
    g = grid_with_nodes(-2, 2, 200, [-1.0])
    assert quasipotential_dp(iid_rates, -1.0, g)(-1.0) == 0.0


def test_downhill_is_free(iid_rates):
    g = grid_with_nodes(-2, 2, 400, [0.0, -1.0, 1.0])
    f = quasipotential_dp(iid_rates, 0.0, g)
    assert f(-1.0) <= 1e-3 and f(1.0) <= 1e-3


def test_dp_requires_source_on_grid(iid_rates):
    with pytest.raises(ValueError):
        quasipotential_dp(iid_rates, 0.001, np.linspace(-2, 2, 11))


def test_dp_agrees_with_hj_root(iid_rates):
    g = grid_with_nodes(-2, 2, 400, [0.0, -1.0, 1.0])
    dp = quasipotential_dp(iid_rates, -1.0, g)(0.0)
    hj = hj_root_quasipotential(iid_rates, -1.0, 0.0)
    assert dp == pytest.approx(hj, rel=0.02)
    assert hj == pytest.approx(0.1001, abs=2e-4)


def test_more_speeds_never_raise_the_cost(iid_rates):
    g = grid_with_nodes(-2, 2, 120, [-1.0])
    coarse = default_speed_grid(iid_rates, 16)
    fine = np.union1d(coarse, default_speed_grid(iid_rates, 48))
    a = quasipotential_dp(iid_rates, -1.0, g, speed_grid=coarse).R
    b = quasipotential_dp(iid_rates, -1.0, g, speed_grid=fine).R
    assert np.all(b <= a + 1e-15)


def test_momentum_root_changes_sign_of_H():
    rm = RateModel(make_builtin("iid-bessel", b0=-0.1))
    b = momentum_root(rm, 0.0, +1)
    assert b > 0
    assert rm.H_exact(0.0, b - 1e-6) < 0 < rm.H_exact(0.0, b + 1e-6)
    assert momentum_root(rm, 0.0, -1) is None


def test_no_momentum_where_the_drift_vanishes(iid_rates):
    assert (momentum_root(iid_rates, 0.0, +1) or 0.0) == 0.0
    assert (momentum_root(iid_rates, 0.0, -1) or 0.0) == 0.0


def test_climbs_out_of_a_symmetric_middle_well():
    rm = RateModel(make_builtin("markov-sym"))
    up = hj_root_quasipotential(rm, 0.0, 1.0, n_cells=100)
    down = hj_root_quasipotential(rm, 0.0, -1.0, n_cells=100)
    assert up > 0 and abs(up - down) <= 1e-9


def test_hj_barriers_mirror_for_odd_drift(iid_rates):
    left = hj_root_quasipotential(iid_rates, -1.0, 0.0)
    right = hj_root_quasipotential(iid_rates, 1.0, 0.0)
    assert left == pytest.approx(right, abs=1e-9)


# -- transition structure -----------------------------------------------------------------
def test_symmetric_wells_have_equal_escape_costs(sym_R):
    dp, hj = sym_R
    assert dp[1, 0] == pytest.approx(dp[1, 2], rel=1e-9)
    assert dp[0, 1] == pytest.approx(dp[2, 1], rel=1e-9)
    off = ~np.eye(3, dtype=bool)
    assert np.allclose(dp[off], hj[off], rtol=0.02)


def test_asymmetric_middle_well_leans_right(asym_R):
    # from 0 the climb over -1.5 towards -2 costs more than the climb over 1 towards 2
    assert asym_R[1, 0] > asym_R[1, 2]


def test_two_wells_escape_cost_is_the_off_diagonal(iid_rates):
    A = find_attractors(make_builtin("iid-bessel", kappa=0.1).params["bbar"], (-2, 2))
    T = transition_matrix(A, iid_rates, "hj", n_cells=100)
    assert T.R_i.tolist() == [T.R[0, 1], T.R[1, 0]]


def test_triangle_inequality(sym_R, asym_R):
    for R in (sym_R[0], asym_R):
        for i, j, k in itertools.permutations(range(3), 3):
            # the grid charges a little for the free descent into O_j
            assert R[i, k] <= R[i, j] + R[j, k] + 1e-5


# -- i-graphs -------------------------------------------------------------------------------
def test_igraphs_for_two_and_three_labels():
    assert enumerate_igraphs(2, 0) == [{1: 0}]
    got = enumerate_igraphs(3, 0)
    want = [{1: 0, 2: 0}, {1: 0, 2: 1}, {1: 2, 2: 0}]
    assert sorted(map(sorted, (g.items() for g in got))) == sorted(map(sorted, (g.items() for g in want)))


@pytest.mark.parametrize("ell", [2, 3, 4, 5, 6])
def test_igraph_counts_follow_cayley(ell):
    for i in range(ell):
        assert len(enumerate_igraphs(ell, i)) == ell ** (ell - 2)


def test_igraph_limits():
    with pytest.raises(TooLarge):
        enumerate_igraphs(9, 0)
    with pytest.raises(ValueError):
        enumerate_igraphs(1, 0)


def test_two_well_weights_closed_form():
    R = np.array([[np.nan, 0.3], [0.1, np.nan]])
    t = igraph_weights(R, 0.05)
    assert t.log_Q == pytest.approx([-0.1 / 0.05, -0.3 / 0.05], abs=1e-12)
    assert t.prediction[0] == pytest.approx(1 / (1 + math.exp(-4)), abs=1e-12)


def test_symmetric_three_wells_by_hand():
    a, b, c = 0.02, 0.05, 0.08  # side->middle, middle->side, side->other side
    R = np.array([[np.nan, a, c], [b, np.nan, b], [c, a, np.nan]])
    eps = 0.01
    e = lambda s: math.exp(-s / eps)  # noqa: E731
    q0 = 2 * e(b + c) + e(b + a)
    q1 = e(a + a) + e(a + c) + e(c + a)
    t = igraph_weights(R, eps)
    assert np.exp(t.log_Q) == pytest.approx([q0, q1, q0], rel=1e-12)
    assert t.prediction.sum() == pytest.approx(1.0, abs=1e-15)


def test_symmetric_wells_ratio_at_five_hundredths():
    # labels 1, 2, 3 of the middle-well example become indices 0, 1, 2
    a, b, eps = 0.03, 0.05, 0.05
    R = np.array([[np.nan, b, 2 * b], [a, np.nan, a], [2 * b, b, np.nan]])
    e = lambda s: math.exp(-s / eps)  # noqa: E731
    q1 = e(a + 2 * b) + e(a + b) + e(a + 2 * b)  # {2->1,3->1} {2->1,3->2} {2->3,3->1}
    q2 = e(b + b) + e(b + 2 * b) + e(2 * b + b)
    t = igraph_weights(R, eps)
    assert math.exp(t.log_Q[1] - t.log_Q[0]) == pytest.approx(q2 / q1, rel=1e-12)
    assert abs(t.prediction.sum() - 1.0) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(R=st.lists(st.floats(0.0, 0.2), min_size=12, max_size=12),
       perm=st.permutations(range(4)), eps=st.floats(0.005, 0.5))
def test_weights_are_permutation_equivariant(R, perm, eps):
    M = np.full((4, 4), np.nan)
    M[~np.eye(4, dtype=bool)] = R
    p = np.array(perm)
    P = M[np.ix_(p, p)]
    a = igraph_weights(M, eps)
    b = igraph_weights(P, eps)
    assert np.allclose(b.log_Q, a.log_Q[p], atol=1e-9)
    assert b.prediction.sum() == pytest.approx(1.0)


def test_infinite_costs_drop_graphs():
    R = np.array([[np.nan, np.inf], [0.1, np.nan]])
    t = igraph_weights(R, 0.1)
    assert t.prediction == pytest.approx([1.0, 0.0])
    with pytest.raises(AllInfinite):
        igraph_weights(np.array([[np.nan, np.inf], [np.inf, np.nan]]), 0.1)


def test_exit_time_prediction():
    point, (lo, hi) = predict_exit_time(0.1, 0.05, 0.01)
    assert point == pytest.approx(math.exp(2.0))
    assert lo == pytest.approx(math.exp(1.8)) and hi == pytest.approx(math.exp(2.2))
