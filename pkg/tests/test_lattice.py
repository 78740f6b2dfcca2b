import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chessgap.lattice import (
    GeometryError,
    Plane,
    SiteMap,
    TorusGeometry,
    block_sites,
    plane_halves,
    plane_reflection,
    theta_t_map,
)


def coords_of(g, sites):
    return {tuple(int(v) for v in g.coords[s]) for s in sites}


def test_geometry_sizes():
    g = TorusGeometry(3, 4, 2)
    assert g.n_sites == 64
    assert g.n_blocks == 8
    assert g.block_side == 2


@pytest.mark.parametrize("d,L,B", [(2, 5, 1), (2, 4, 3), (2, 4, 4), (2, 6, 2), (0, 4, 1), (2, 4, 0)])
def test_geometry_rejects_bad_parameters(d, L, B):
    with pytest.raises(GeometryError):
        TorusGeometry(d, L, B)


def test_non_power_of_two_warns():
    with pytest.warns(UserWarning):
        TorusGeometry(1, 12, 2)


def test_block_at_origin():
    g = TorusGeometry(2, 4, 1)
    assert coords_of(g, block_sites(g, (0, 0))) == {(0, 0), (1, 0), (0, 1), (1, 1)}


def test_block_wraps_around():
    g = TorusGeometry(2, 4, 1)
    assert coords_of(g, block_sites(g, (3, 0))) == {(3, 0), (0, 0), (3, 1), (0, 1)}


def test_adjacent_blocks_share_a_face():
    g = TorusGeometry(2, 8, 2)
    a = set(block_sites(g, (0, 0)).tolist())
    b = set(block_sites(g, (1, 0)).tolist())
    assert len(a & b) == 3


def test_block_rejects_points_outside_factor_torus():
    g = TorusGeometry(2, 4, 1)
    with pytest.raises(GeometryError):
        block_sites(g, (4, 0))
    with pytest.raises(GeometryError):
        block_sites(g, (0,))


def test_theta_identity_and_even_translation():
    g = TorusGeometry(2, 4, 1)
    assert theta_t_map(g, (0, 0)).is_identity()
    assert theta_t_map(g, (2, 0)) == g.translate((2, 0))


def test_theta_odd_reflects_base_block():
    g = TorusGeometry(2, 4, 1)
    th = theta_t_map(g, (1, 0))
    # (0,0) -> (1-0)+1 = (2,0) and (1,0) -> (0,0)+1 = (1,0)
    assert tuple(g.coords[th(g.index([0, 0]))]) == (2, 0)
    assert tuple(g.coords[th(g.index([1, 0]))]) == (1, 0)
    # undoing the translation leaves a reflection, an involution
    back = g.translate((-1, 0)).compose(th)
    assert back.is_involution()


@settings(max_examples=40, deadline=None)
@given(
    d=st.integers(1, 3),
    m=st.sampled_from([2, 4]),
    B=st.integers(1, 2),
    data=st.data(),
)
def test_theta_maps_base_block_onto_block(d, m, B, data):
    g = TorusGeometry(d, m * B, B)
    t = tuple(data.draw(st.integers(0, m - 1)) for _ in range(d))
    th = theta_t_map(g, t)
    base = block_sites(g, (0,) * d)
    assert set(th(base).tolist()) == set(block_sites(g, t).tolist())


@settings(max_examples=40, deadline=None)
@given(m=st.sampled_from([2, 4]), data=st.data())
def test_odd_direction_reflections_commute(m, data):
    g = TorusGeometry(2, 2 * m, 2)
    t = tuple(data.draw(st.integers(0, m - 1)) for _ in range(2))
    th = theta_t_map(g, t)
    # the reflections in distinct odd directions commute, so applying the map
    # assembled in either order gives the same permutation
    c = g.coords.copy()
    for i in reversed(range(2)):
        if t[i] % 2:
            c[:, i] = g.B - c[:, i]
    assert np.array_equal(th.perm, g.index(c + g.B * np.array(t)))


def test_site_map_rejects_non_permutation():
    with pytest.raises(GeometryError):
        SiteMap([0, 0, 1])


def test_site_map_algebra():
    g = TorusGeometry(2, 4, 1)
    t = g.translate((1, 2))
    assert t.compose(t.inverse()).is_identity()
    assert hash(t) == hash(g.translate((1, 2)))
    vals = np.arange(g.n_sites)
    assert np.array_equal(t.pull(vals), t.perm)


@pytest.mark.parametrize("kind", ["axis", "diagonal", "antidiagonal"])
@pytest.mark.parametrize("offset", [0, 1])
def test_plane_reflection_is_involution(kind, offset):
    g = TorusGeometry(2, 4, 1)
    th = plane_reflection(g, Plane(kind, 0, offset))
    assert th.is_involution()


def test_axis_plane_fixes_exactly_its_two_lines():
    g = TorusGeometry(2, 4, 1)
    th = plane_reflection(g, Plane("axis", 0, 1))
    fixed = coords_of(g, th.fixed_points())
    assert fixed == {(x, y) for x in (1, 3) for y in range(4)}


def test_axis_halves_swap_under_reflection():
    g = TorusGeometry(2, 4, 1)
    p = Plane("axis", 1, 0)
    th = plane_reflection(g, p)
    plus, minus = plane_halves(g, p)
    assert set(th(plus).tolist()) == set(minus.tolist())
    assert set(plus.tolist()) | set(minus.tolist()) == set(range(g.n_sites))


def test_diagonal_plane_fixes_the_diagonal():
    g = TorusGeometry(2, 4, 1)
    th = plane_reflection(g, Plane("diagonal", 0, 0))
    assert coords_of(g, th.fixed_points()) == {(k, k) for k in range(4)}


def test_diagonal_plane_rejected_off_two_dimensions():
    with pytest.raises(GeometryError):
        plane_reflection(TorusGeometry(3, 4, 1), Plane("diagonal"))


def test_neighbour_tables():
    g = TorusGeometry(2, 4, 1)
    x = g.index([3, 0])
    assert tuple(g.coords[g.neighbors[0, x]]) == (0, 0)
    assert tuple(g.coords[g.neighbors[1, x]]) == (2, 0)
    assert tuple(g.coords[g.neighbors[3, x]]) == (3, 3)
    assert tuple(g.coords[g.neighbors2[0, x]]) == (1, 0)
    assert tuple(g.coords[g.diagonal_neighbors[0, x]]) == (0, 1)
