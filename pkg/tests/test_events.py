import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chessgap.events import (
    EMPTY,
    OMEGA,
    BlockEvent,
    BlockView,
    BondClass,
    EventError,
    GoodFamily,
    block_density,
    check_family,
    classify_bond,
    complement,
    diluted_events,
    event_table,
    family_densities,
    intersection,
    magnetostriction_events,
    nlvm_bad_split,
    nlvm_events,
    o2af_events,
    potts_events,
    table_event,
    union,
    view_of_arrays,
)
from chessgap.lattice import TorusGeometry
from chessgap.models import (
    DilutedPotts,
    DilutedXY,
    Magnetostriction,
    NonlinearFerromagnet,
    O2AF,
    Potts,
    constant_configuration,
    random_configuration,
)

G4 = TorusGeometry(2, 4, 1)


def base_view(g, spins, occ=None, edges=None):
    return view_of_arrays(g, np.asarray(spins), None if occ is None else np.asarray(occ), edges, [0])


def truth(family, view):
    return {e.name: bool(e(view)[0]) for e in family.goods} | {"bad": bool(family.bad(view)[0])}


def site_field(g, fn, dtype=float):
    return np.array([fn(*g.coords[s]) for s in range(g.n_sites)], dtype=dtype)


def test_potts_constant_block_is_ordered():
    f = potts_events(5)
    res = truth(f, base_view(G4, np.full(16, 4)))
    assert res.pop("ord_4")
    assert not any(res.values())


def test_potts_proper_colouring_is_disordered():
    f = potts_events(5)
    spins = site_field(G4, lambda x, y: 1 + x % 2 + 2 * (y % 2), np.int64)
    res = truth(f, base_view(G4, spins))
    assert res.pop("dis")
    assert not any(res.values())


def test_potts_one_disagreeing_site_is_bad():
    f = potts_events(5)
    spins = np.full(16, 2)
    spins[G4.index([1, 1])] = 3
    res = truth(f, base_view(G4, spins))
    assert res["bad"] and sum(res.values()) == 1


def test_potts_q2_uses_checkerboards():
    f = potts_events(2)
    assert f.names == ["ord_1", "ord_2", "chk_1", "chk_2"]
    spins = site_field(G4, lambda x, y: 1 + (x + y) % 2, np.int64)
    res = truth(f, base_view(G4, spins))
    assert res["chk_1"] and not res["chk_2"]


def test_diluted_examples():
    f = diluted_events("potts", 3)
    spins = np.ones(16, dtype=np.int64)
    res = truth(f, base_view(G4, spins, np.ones(16, dtype=np.int64)))
    assert res == {"dense": True, "even": False, "odd": False, "bad": False}
    even = site_field(G4, lambda x, y: (x + y + 1) % 2, np.int64)
    res = truth(f, base_view(G4, spins, even))
    assert res == {"dense": False, "even": True, "odd": False, "bad": False}
    res = truth(f, base_view(G4, spins, np.zeros(16, dtype=np.int64)))
    assert res["bad"] and sum(res.values()) == 1


def test_diluted_refinement():
    f = diluted_events("potts", 3, refine=True)
    assert f.names == ["dense_1", "dense_2", "dense_3", "even", "odd"]
    res = truth(f, base_view(G4, np.full(16, 2), np.ones(16, dtype=np.int64)))
    assert res["dense_2"] and not res["dense_1"]
    with pytest.raises(EventError):
        diluted_events("xy", refine=True)


G8 = TorusGeometry(2, 8, 4)


@pytest.mark.parametrize("kappa", [1e-6, 0.1, 0.9])
def test_o2af_stripes(kappa):
    f = o2af_events(kappa, 4)
    u = 0.3
    rows = site_field(G8, lambda x, y: u + np.pi * (y % 2))
    cols = site_field(G8, lambda x, y: u + np.pi * (x % 2))
    neel = site_field(G8, lambda x, y: u + np.pi * ((x + y) % 2))
    assert truth(f, base_view(G8, rows)) == {"stripes_h": True, "stripes_v": False, "bad": False}
    assert truth(f, base_view(G8, cols)) == {"stripes_h": False, "stripes_v": True, "bad": False}
    assert truth(f, base_view(G8, neel))["bad"]


def test_o2af_rejects_bad_parameters():
    with pytest.raises(EventError):
        o2af_events(0.0)
    with pytest.raises(EventError):
        o2af_events(0.1, 3)


def test_nlvm_examples():
    C, p = 3.0, 100.0
    f = nlvm_events(C, p)
    wo, mix = nlvm_bad_split(C, p)
    assert truth(f, base_view(G4, np.zeros(16)))["so"]
    stag = site_field(G4, lambda x, y: np.pi * ((x + y) % 2))
    assert truth(f, base_view(G4, stag))["dis"]
    # one weak bond between (1,0) and (1,1) inside the base block
    spins = np.zeros(16)
    spins[G4.index([1, 1])] = C / (2 * np.sqrt(p))
    spins[G4.index([0, 1])] = C / (2 * np.sqrt(p))
    v = base_view(G4, spins)
    assert truth(f, v)["bad"] and wo(v)[0] and not mix(v)[0]


def test_classify_bond_examples():
    assert classify_bond(0.0005, 10, 1e4) is BondClass.STRONG
    assert classify_bond(0.05, 10, 1e4) is BondClass.WEAK
    assert classify_bond(0.1, 10, 1e4) is BondClass.DISORDERED
    with pytest.raises(EventError):
        classify_bond(0.1, 11, 100)
    with pytest.raises(EventError):
        classify_bond(0.1, 0.5, 100)


@settings(max_examples=100, deadline=None)
@given(a=st.floats(0, np.pi), b=st.floats(0, np.pi), C=st.floats(1, 10), p=st.floats(100, 1e6))
def test_classify_bond_even_and_monotone(a, b, C, p):
    assert classify_bond(a, C, p) == classify_bond(-a, C, p)
    lo, hi = sorted((a, b))
    assert classify_bond(lo, C, p) <= classify_bond(hi, C, p)


def test_nlvm_bad_split_covers_bad():
    C, p = 2.0, 400.0
    f = nlvm_events(C, p)
    wo, mix = nlvm_bad_split(C, p)
    rng = np.random.default_rng(3)
    lo = 1 / (C * np.sqrt(p))
    # angles on a scale near the thresholds so that every class occurs
    spins = rng.choice([-1, 1], size=(10**5, 16)) * rng.exponential(3 * lo, size=(10**5, 16))
    v = view_of_arrays(G4, spins, blocks=[0])
    bad = f.bad(v)[:, 0]
    split = wo(v)[:, 0] | mix(v)[:, 0]
    good = f.goods[0](v)[:, 0] | f.goods[1](v)[:, 0]
    assert bad.any() and good.any()
    assert np.all(split[bad])
    assert not np.any(split[good])


def test_magnetostriction_examples():
    eta, eps = 1.0, 0.3
    f = magnetostriction_events(eta, eps)
    spins = np.ones(16, dtype=np.int64)
    ed = np.full((2, 16), eta / 2)
    assert truth(f, base_view(G4, spins, None, ed))["contr"]
    ed = np.full((2, 16), eta + 2 * eps)
    assert truth(f, base_view(G4, spins, None, ed))["exp_plus"]
    assert truth(f, base_view(G4, -spins, None, ed))["exp_minus"]
    ed = np.full((2, 16), eta + eps / 2)
    assert truth(f, base_view(G4, spins, None, ed))["bad"]
    with pytest.raises(EventError):
        magnetostriction_events(1.0, 0.5, r_max=1.2)


def test_density_examples():
    m = Potts(4)
    c = constant_configuration(m, G4, 3)
    f = potts_events(4)
    assert block_density(OMEGA, G4, c) == 1.0
    assert block_density(EMPTY, G4, c) == 0.0
    assert block_density(f.event("ord_3"), G4, c) == 1.0
    assert family_densities(f, G4, c)["ord_3"] == 1.0
    with pytest.raises(EventError):
        block_density(OMEGA, G4, c, N=5)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), shift=st.tuples(st.integers(0, 3), st.integers(0, 3)))
def test_density_translation_covariant(seed, shift):
    m = Potts(3)
    f = potts_events(3)
    c = random_configuration(m, G4, np.random.default_rng(seed))
    c2 = c.pull(G4.translate(shift).perm)
    assert family_densities(f, G4, c2) == family_densities(f, G4, c)


def _families():
    return [
        (potts_events(3), Potts(3)),
        (potts_events(2), Potts(2)),
        (diluted_events("potts", 2), DilutedPotts(2)),
        (diluted_events("xy"), DilutedXY()),
        (nlvm_events(3, 100), NonlinearFerromagnet(100)),
        (magnetostriction_events(0.8, 0.3, 4.0), Magnetostriction()),
    ]


@settings(max_examples=30, deadline=None)
@given(k=st.integers(0, 5), seed=st.integers(0, 2**31))
def test_goods_partition_with_bad(k, seed):
    f, m = _families()[k]
    rng = np.random.default_rng(seed)
    cfgs = [random_configuration(m, G4, rng) for _ in range(20)]
    cfgs += [constant_configuration(m, G4)]
    for c in cfgs:
        v = view_of_arrays(G4, c.spins, c.occ, c.edges)
        ind = f.indicators(v)
        assert np.all(ind.sum(axis=-1) <= 1)
        assert np.array_equal(f.bad(v), ~ind.any(axis=-1))
        lab = f.classify(v)
        assert np.array_equal(lab == f.r, f.bad(v))


@settings(max_examples=30, deadline=None)
@given(k=st.integers(0, 5), seed=st.integers(0, 2**31))
def test_reflection_symmetric_flag(k, seed):
    f, m = _families()[k]
    rng = np.random.default_rng(seed)
    off = G4.local_offsets
    lookup = {tuple(u): i for i, u in enumerate(off)}
    for e in f.goods:
        if not e.reflection_symmetric or (e.sampler is None and not m.discrete):
            continue
        c = random_configuration(m, G4, rng)
        if e.sampler is not None:
            smp = e.sampler(rng, 1, m, G4)
            c.spins[G4.block_table[0]] = smp["spins"][0]
            if c.occ is not None and "occ" in smp:
                c.occ[G4.block_table[0]] = smp["occ"][0]
            if c.edges is not None:
                continue
        v = view_of_arrays(G4, c.spins, c.occ, blocks=[0])
        for axis in range(2):
            mir = off.copy()
            mir[:, axis] = 1 - mir[:, axis]
            perm = np.array([lookup[tuple(u)] for u in mir])
            occ = None if v.occ is None else v.occ[..., perm]
            w = BlockView(v.spins[..., perm], occ, None, v.parity, v.bonds, v.local)
            assert e(v)[0] == e(w)[0]


def test_event_algebra_and_tables():
    m = Potts(2)
    g = G4
    f = potts_events(2)
    a, b = f.event("ord_1"), f.event("chk_1")
    ta, tb = event_table(a, m, g), event_table(b, m, g)
    assert ta.sum() == 1 and tb.sum() == 1
    u = table_event("u", ta | tb, m, g)
    assert np.array_equal(event_table(union(a, b), m, g), event_table(u, m, g))
    assert not event_table(intersection(a, b), m, g).any()
    assert np.array_equal(event_table(complement(a), m, g), ~ta)
    assert table_event("a", ta, m, g).reflection_symmetric
    assert not table_event("b", tb, m, g).reflection_symmetric
    with pytest.raises(EventError):
        table_event("x", ta[:3], m, g)


def test_check_family_potts_passes():
    rep = check_family(potts_events(3), Potts(3))
    assert rep.passed and rep.method == "exhaustive"


def test_check_family_diluted_passes():
    rep = check_family(diluted_events("potts", 2), DilutedPotts(2), budget=10**5)
    assert rep.passed
    rep = check_family(diluted_events("xy"), DilutedXY(), samples=2000)
    assert rep.passed and rep.method == "randomized"


def test_check_family_continuous_families_pass():
    assert check_family(nlvm_events(3, 100), NonlinearFerromagnet(100), samples=2000).passed
    assert check_family(magnetostriction_events(0.8, 0.3, 4.0), Magnetostriction(), samples=2000).passed
    assert check_family(o2af_events(0.1, 2), O2AF(), samples=500).passed


def test_check_family_broken_family_fails_with_witness():
    e = potts_events(3).goods[0]
    broken = GoodFamily("broken", [e, BlockEvent("copy", e.predicate)], 1)
    rep = check_family(broken, Potts(3))
    assert not rep.passed
    assert rep.failure == "disjointness"
    assert rep.witness["events"] == ["ord_1", "copy"]


def test_check_family_incompatible_neighbours_detected():
    ords = potts_events(3).goods[:2]
    anything = BlockEvent("nonconst", lambda v: ~np.all(v.spins == v.spins[..., :1], axis=-1))
    rep = check_family(GoodFamily("loose", [ords[0], anything], 1), Potts(3))
    assert not rep.passed and rep.failure == "neighbour compatibility"
