import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chessgap.bounds import (
    BlockLabeling,
    BoundsError,
    _connected_sets,
    c1_fit,
    c_n_holds,
    contour_sum,
    delta_for_epsilon,
    e_n_holds,
    enerbd_check,
    enerbd_constants,
    lemma_incl_bruteforce,
    nlvm_bounds,
    nlvm_sup_bad,
    partition_bound_values,
    potts_bad_bound,
    potts_bound_report,
    potts_q_threshold,
    r_mn_fraction,
    realizable,
    separating_sets,
    y_n_count,
)

# ------------------------------------------------------------------ Potts


def test_potts_bound_at_q25():
    assert potts_bad_bound(25, 2) == pytest.approx((125 / 441) ** 0.25, abs=1e-12)
    assert potts_bad_bound(25, 2) == pytest.approx(0.7297, abs=1e-4)


def test_potts_bound_decreasing():
    qs = np.geomspace(5, 1e6, 200)
    vals = np.array([potts_bad_bound(q, 2) for q in qs])
    assert np.all(np.diff(vals) < 0)


def test_potts_bound_asymptotics():
    # value * q^(1/8) = (q / (q - 4))^(1/2) -> 1 at d = 2
    for q in (1e8, 1e12, 1e16):
        assert potts_bad_bound(q, 2) * q**0.125 == pytest.approx(math.sqrt(q / (q - 4)), rel=1e-12)
    assert potts_bad_bound(1e16, 2) == pytest.approx(0.01, rel=1e-12)


def test_potts_bound_hypothesis():
    with pytest.raises(BoundsError, match="q > 2d"):
        potts_bad_bound(4, 2)
    rep = potts_bound_report(25, 2)
    assert rep.valid and rep.to_dict()["value"] == pytest.approx(0.7296555, abs=1e-7)


# --------------------------------------------------------- energy constants


def _ratio(x):
    return -np.log((1 + np.cos(x)) / 2) / x**2


def test_enerbd_constants_match_independent_extremization():
    a, b = enerbd_constants()
    assert a == 0.25
    xs = np.linspace(1e-4, 1, 200001)
    assert b == pytest.approx(float(np.max(_ratio(xs))), rel=1e-9)
    assert b == pytest.approx(-2 * math.log(math.cos(0.5)), rel=1e-9)
    assert a < b


def test_enerbd_sandwich_on_grid():
    a, b = enerbd_constants()
    res = enerbd_check(a, b, 10**4)
    assert res["max_violation"] <= 1e-12
    assert res["strict_interior"]
    x = 0.0
    assert math.exp(-b * x**2) == (1 + math.cos(x)) / 2 == math.exp(-a * x**2)


def test_enerbd_detects_wrong_constants():
    assert enerbd_check(0.3, 0.26116848, 1000)["max_violation"] > 0
    assert enerbd_check(0.25, 0.2, 1000)["max_violation"] > 0


# ------------------------------------------------------ nonlinear bounds


def test_nlvm_gso_example():
    assert nlvm_bounds(0.0, 10, 1e6, 0.5).gso == pytest.approx(1 / (math.pi * 1e4), rel=1e-12)


def test_nlvm_gdis_example():
    val = nlvm_bounds(10.0, 3, 1e4, 0.5, a=0.25, b=0.2612).gdis
    ref = 942.478 * math.exp(-20 * (math.exp(-0.2612 / 9) - math.exp(-2.25)))
    assert val == pytest.approx(ref, rel=1e-5)
    assert val == pytest.approx(2.84e-5, rel=0.01)


def test_nlvm_sup_decreases_with_p():
    betas = np.linspace(0, 20, 401)
    sups = [nlvm_sup_bad(3, 1e4 * 2**k, 0.5, betas) for k in range(6)]
    assert all(b < a for a, b in zip(sups, sups[1:]))


def test_nlvm_hypotheses_named():
    with pytest.raises(BoundsError, match="C <= sqrt"):
        nlvm_bounds(1.0, 20, 100, 0.5)
    with pytest.raises(BoundsError, match="kappa"):
        nlvm_bounds(1.0, 3, 100, 1.0)
    with pytest.raises(BoundsError, match="beta"):
        nlvm_bounds(-1.0, 3, 100, 0.5)


@settings(max_examples=100, deadline=None)
@given(
    beta=st.floats(0, 50), C=st.floats(1, 10), logp=st.floats(2, 8), kappa=st.floats(0.01, 0.99),
)
def test_nlvm_bounds_are_min_of_branches(beta, C, logp, kappa):
    p = 10**logp
    if C > math.sqrt(p):
        return
    r = nlvm_bounds(beta, C, p, kappa)
    for k in ("pwo", "pmix", "gdis", "gso"):
        assert getattr(r, k) >= 0
    w1, w2 = r.branches["pwo"]
    m1, m2 = r.branches["pmix"]
    assert r.pwo <= 4 * w1**0.25 + 1e-300 and r.pwo <= 4 * w2**0.25
    assert r.pmix <= 4 * m1**0.5 and r.pmix <= 4 * m2**0.5
    assert len(r.reports()) == 4


def test_partition_bound_examples():
    v = partition_bound_values(2, 0.0, 3, 100, 1.0)
    assert v["dis_lower"] == pytest.approx((2 * math.pi) ** 4)
    assert v["dis_upper"] == pytest.approx(v["dis_lower"])
    for beta in (0.0, 1.0, 5.0):
        v = partition_bound_values(2, beta, 3, 100, 1.0)
        assert v["so_lower"] <= v["so_upper"]
        assert v["dis_lower"] <= v["dis_upper"]


# ----------------------------------------------------------- separators


def _path_oracle(gamma, x, y, N):
    # breadth-first search over the grid avoiding gamma
    if x in gamma or y in gamma:
        return True
    seen, stack = {x}, [x]
    while stack:
        u = stack.pop()
        for i in range(2):
            for s in (-1, 1):
                v = list(u)
                v[i] += s
                v = tuple(v)
                if 0 <= v[i] < N and v not in seen and v not in gamma:
                    if v == y:
                        return False
                    seen.add(v)
                    stack.append(v)
    return True


def test_separating_sets_examples():
    S = separating_sets((0, 0), (1, 1), 2, 2)
    assert frozenset({(0, 0)}) in S and frozenset({(1, 1)}) in S
    assert frozenset({(1, 0), (0, 1)}) not in S
    assert frozenset({(1, 0)}) not in S


@pytest.mark.parametrize("N", [2, 3])
def test_separating_sets_match_path_oracle(N):
    pts = list(itertools.product(range(N), repeat=2))
    conn = set()
    for mask in _connected_sets(N, 2, 20):
        conn.add(frozenset(pts_i for i, pts_i in enumerate(_ordered(N)) if (mask >> i) & 1))
    for x, y in itertools.combinations(pts, 2):
        got = set(separating_sets(x, y, N, 2))
        want = {g for g in conn if _path_oracle(g, x, y, N)}
        assert got == want


def _ordered(N):
    # site index i = x0 + N x1
    return [(i % N, i // N) for i in range(N * N)]


def test_connected_set_count_on_small_grids():
    assert len(_connected_sets(2, 2, 20)) == 13
    assert len(_connected_sets(3, 2, 20)) == 218


def test_contour_sum_examples():
    v = contour_sum((0, 0), (1, 0), 3, 2, 0.01)
    assert 0.02 <= v <= 0.03
    ps = [0.01, 0.05, 0.1, 0.3]
    vals = [contour_sum((0, 0), (2, 2), 3, 2, p) for p in ps]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    # leading order: the two endpoint singletons
    assert contour_sum((0, 0), (2, 2), 3, 2, 1e-6) / 1e-6 == pytest.approx(2, rel=1e-4)
    ex = contour_sum((0, 0), (2, 2), 3, 2, 0.01, exclude_endpoints=True)
    assert ex == pytest.approx(contour_sum((0, 0), (2, 2), 3, 2, 0.01) - 0.02)


def test_c1_fit_conventions():
    full = c1_fit(2)
    excl = c1_fit(2, exclude_endpoints=True)
    assert excl < full
    assert full == pytest.approx(208.3, rel=1e-3)


def test_delta_for_epsilon():
    assert delta_for_epsilon(0.1, 2, 10) == pytest.approx(math.sqrt(0.01 / 40))
    eps = np.linspace(0.01, 0.49, 20)
    vals = np.array([delta_for_epsilon(e, 2, 10) for e in eps])
    assert np.all(np.diff(vals) > 0)
    assert np.allclose(vals / eps, vals[0] / eps[0])
    with pytest.raises(BoundsError):
        delta_for_epsilon(0.5, 2, 10)


def test_potts_threshold_is_sharp():
    res = potts_q_threshold(0.45, 2, c1=20.0)
    q = res["q_star"]
    assert potts_bad_bound(q, 2) < res["delta"]
    assert potts_bad_bound(q * (1 - 1e-6), 2) >= res["delta"]


# ----------------------------------------------------------- labelings


def test_all_bad_labeling():
    lab = BlockLabeling(2, 2, 2, np.zeros(4))
    assert y_n_count(lab) == 12
    assert c_n_holds(lab, 0.5)


def test_all_good_labeling():
    lab = BlockLabeling(2, 2, 2, np.ones(4))
    assert y_n_count(lab) == 0
    assert not c_n_holds(lab, 0.01)


def test_diagonal_goods_labeling():
    lab = BlockLabeling(2, 2, 2, np.array([[1, 0], [0, 2]]))
    assert e_n_holds(lab, 0.2)
    assert y_n_count(lab) == 12
    assert c_n_holds(lab, 0.2)
    assert realizable(lab)
    assert not realizable(BlockLabeling(2, 2, 2, np.array([[1, 2], [0, 0]])))


def _y_oracle(labels, N):
    pts = list(itertools.product(range(N), repeat=2))
    good = {p for p in pts if labels[p] > 0}
    bad_all = set(pts) - good
    count = 0
    for x in pts:
        for y in pts:
            if x != y and (x not in good or y not in good or _path_oracle(bad_all - {x, y}, x, y, N)):
                count += 1
    return count


@settings(max_examples=60, deadline=None)
@given(data=st.data(), N=st.integers(2, 4))
def test_y_n_matches_path_oracle(data, N):
    labels = np.array(data.draw(st.lists(st.integers(0, 2), min_size=N * N, max_size=N * N))).reshape(N, N)
    assert y_n_count(BlockLabeling(N, 2, 2, labels)) == _y_oracle(labels, N)


@pytest.mark.parametrize("N,d,r", [(2, 2, 2), (2, 2, 3), (3, 2, 2)])
@pytest.mark.parametrize("eps", [0.2, 0.34, 0.5])
def test_lemma_inclusion_exhaustive(N, d, r, eps):
    rep = lemma_incl_bruteforce(N, d, r, eps)
    assert rep.passed and rep.checked > 0


def test_lemma_inclusion_needs_realizability():
    rep = lemma_incl_bruteforce(2, 2, 2, 0.3, filtered=False)
    assert not rep.passed
    lab = BlockLabeling(2, 2, 2, rep.counterexample)
    assert not realizable(lab)
    assert e_n_holds(lab, 0.3) and not c_n_holds(lab, 0.3)


def test_r_mn_fraction_examples():
    assert r_mn_fraction(np.zeros((4, 4)), 2, 0.3) == 1.0
    assert r_mn_fraction(np.ones((4, 4)), 2, 0.3) == 0.0
    lab = np.ones((4, 4), dtype=int)
    lab[:2, :] = 0
    assert r_mn_fraction(lab, 2, 0.3) == 0.5
    with pytest.raises(BoundsError):
        r_mn_fraction(np.zeros((5, 5)), 2, 0.3)


def test_labeling_validation():
    with pytest.raises(BoundsError):
        BlockLabeling(2, 2, 2, np.array([3, 0, 0, 0]))
    with pytest.raises(BoundsError):
        BlockLabeling(2, 2, 2, np.zeros(5))
