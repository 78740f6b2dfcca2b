"""Torus geometry, block tiling and the reflection maps acting on sites."""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class GeometryError(ValueError):
    """Raised for invalid geometry parameters or out-of-range points."""


@dataclass(frozen=True)
class TorusGeometry:
    """A d-dimensional torus of side L tiled by blocks of scale B.

    Sites are indexed row-major with coordinate 0 varying fastest, so
    ``index(x) = sum_i x_i * L**i``.
    """

    d: int
    L: int
    B: int = 1

    def __post_init__(self):
        d, L, B = self.d, self.L, self.B
        if d < 1:
            raise GeometryError(f"dimension must be >= 1, got {d}")
        if B < 1:
            raise GeometryError(f"block scale must be >= 1, got {B}")
        if L < 2 or L % 2:
            raise GeometryError(f"side length must be even and >= 2, got {L}")
        if L % B:
            raise GeometryError(f"block scale {B} does not divide side length {L}")
        m = L // B
        if m < 2 or m % 2:
            raise GeometryError(f"L/B = {m} must be even and >= 2")
        if m & (m - 1):
            warnings.warn(f"L/B = {m} is not a power of 2", stacklevel=2)

    @property
    def n_sites(self) -> int:
        return self.L**self.d

    @property
    def n_blocks(self) -> int:
        """Number of factor-torus points, (L/B)^d."""
        return (self.L // self.B) ** self.d

    @property
    def block_side(self) -> int:
        return self.L // self.B

    @cached_property
    def strides(self) -> np.ndarray:
        return self.L ** np.arange(self.d, dtype=np.int64)

    @cached_property
    def coords(self) -> np.ndarray:
        """Coordinates of every site, shape (n_sites, d)."""
        idx = np.arange(self.n_sites, dtype=np.int64)
        return (idx[:, None] // self.strides[None, :]) % self.L

    def index(self, x) -> np.ndarray:
        """Site index of coordinates ``x`` (last axis is the coordinate), wrapped mod L."""
        x = np.asarray(x, dtype=np.int64)
        if x.shape[-1] != self.d:
            raise GeometryError(f"expected {self.d} coordinates, got shape {x.shape}")
        return (x % self.L) @ self.strides

    def factor_points(self) -> list[tuple[int, ...]]:
        """All points of the factor torus, ordered like sites (coordinate 0 fastest)."""
        m = self.block_side
        return [tuple(reversed(t)) for t in itertools.product(range(m), repeat=self.d)]

    def check_factor_point(self, t) -> tuple[int, ...]:
        t = tuple(int(v) for v in np.atleast_1d(t))
        if len(t) != self.d or any(v < 0 or v >= self.block_side for v in t):
            raise GeometryError(f"{t} is not a factor-torus point for L/B = {self.block_side}")
        return t

    @cached_property
    def neighbors(self) -> np.ndarray:
        """``neighbors[2i]`` is x+e_i and ``neighbors[2i+1]`` is x-e_i; shape (2d, n_sites)."""
        return self.shifted_table([(i, +1) for i in range(self.d)], step=1)

    @cached_property
    def neighbors2(self) -> np.ndarray:
        """Axial distance-2 neighbours, laid out like ``neighbors``."""
        return self.shifted_table([(i, +1) for i in range(self.d)], step=2)

    @cached_property
    def diagonal_neighbors(self) -> np.ndarray:
        """For d=2: x+e1+e2, x-e1-e2, x+e1-e2, x-e1+e2; shape (4, n_sites)."""
        if self.d != 2:
            raise GeometryError("diagonal neighbours are defined for d=2 only")
        c = self.coords
        shifts = [(1, 1), (-1, -1), (1, -1), (-1, 1)]
        return np.stack([self.index(c + np.array(s)) for s in shifts])

    def shifted_table(self, dirs, step: int) -> np.ndarray:
        c = self.coords
        rows = []
        for i, _ in dirs:
            e = np.zeros(self.d, dtype=np.int64)
            e[i] = step
            rows.append(self.index(c + e))
            rows.append(self.index(c - e))
        return np.stack(rows)

    def translate(self, shift) -> "SiteMap":
        """The translation x -> x + shift."""
        return SiteMap(self.index(self.coords + np.asarray(shift, dtype=np.int64)))

    @cached_property
    def local_offsets(self) -> np.ndarray:
        """Coordinates of the (B+1)^d sites of the base block, coordinate 0 fastest."""
        B = self.B
        pts = [tuple(reversed(u)) for u in itertools.product(range(B + 1), repeat=self.d)]
        return np.array(pts, dtype=np.int64)

    @cached_property
    def local_bonds(self) -> np.ndarray:
        """Nearest-neighbour bonds inside the base block as (a, b, direction) rows of local indices."""
        off = self.local_offsets
        lookup = {tuple(u): k for k, u in enumerate(off)}
        out = []
        for k, u in enumerate(off):
            for i in range(self.d):
                v = list(u)
                v[i] += 1
                if v[i] <= self.B:
                    out.append((k, lookup[tuple(v)], i))
        return np.array(out, dtype=np.int64).reshape(-1, 3)

    @cached_property
    def block_table(self) -> np.ndarray:
        """Sites of the image block of every θ_t map, shape (n_blocks, (B+1)^d)."""
        base = self.index(self.local_offsets)
        return np.stack([theta_t_map(self, t).perm[base] for t in self.factor_points()])


class SiteMap:
    """A bijection of torus sites stored as an index permutation."""

    __slots__ = ("perm",)

    def __init__(self, perm):
        perm = np.asarray(perm, dtype=np.int64)
        if perm.ndim != 1 or not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise GeometryError("site map is not a permutation")
        self.perm = perm
        self.perm.setflags(write=False)

    def __call__(self, x):
        return self.perm[x]

    def __eq__(self, other):
        return isinstance(other, SiteMap) and np.array_equal(self.perm, other.perm)

    def __hash__(self):
        return hash(self.perm.tobytes())

    def __repr__(self):
        return f"SiteMap(n={self.perm.size})"

    def compose(self, other: "SiteMap") -> "SiteMap":
        """``self ∘ other``: first apply ``other``, then ``self``."""
        return SiteMap(self.perm[other.perm])

    def inverse(self) -> "SiteMap":
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return SiteMap(inv)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.perm, np.arange(self.perm.size)))

    def is_involution(self) -> bool:
        return self.compose(self).is_identity()

    def fixed_points(self) -> np.ndarray:
        return np.flatnonzero(self.perm == np.arange(self.perm.size))

    def pull(self, values: np.ndarray) -> np.ndarray:
        """The configuration ``x -> values[map(x)]`` (site axis last)."""
        return values[..., self.perm]


def block_sites(g: TorusGeometry, t) -> np.ndarray:
    """The (B+1)^d sites of the block at factor point ``t``, with wraparound."""
    t = g.check_factor_point(t)
    return g.index(g.local_offsets + g.B * np.array(t, dtype=np.int64))


def theta_t_map(g: TorusGeometry, t) -> SiteMap:
    """Map carrying the base block onto block ``t``.

    In every direction where ``t`` is odd the site is first reflected through the
    midplane of the base block (x_i -> B - x_i); then everything is translated by B*t.
    """
    t = np.array(g.check_factor_point(t), dtype=np.int64)
    c = g.coords.copy()
    odd = (t % 2).astype(bool)
    c[:, odd] = g.B - c[:, odd]
    return SiteMap(g.index(c + g.B * t))


@dataclass(frozen=True)
class Plane:
    """A reflection plane through sites.

    ``kind="axis"`` reflects coordinate ``axis`` about ``offset``; the plane
    x_axis = offset and its antipode offset + L/2 are fixed.
    ``kind="diagonal"`` (d=2) reflects through the line x0 - x1 = offset.
    ``kind="antidiagonal"`` (d=2) reflects through the line x0 + x1 = offset.
    """

    kind: str = "axis"
    axis: int = 0
    offset: int = 0

    def to_dict(self):
        return {"kind": self.kind, "axis": self.axis, "offset": self.offset}


def _check_plane(g: TorusGeometry, plane: Plane):
    if plane.kind == "axis":
        if not 0 <= plane.axis < g.d:
            raise GeometryError(f"axis {plane.axis} out of range for d={g.d}")
    elif plane.kind in ("diagonal", "antidiagonal"):
        if g.d != 2:
            raise GeometryError("diagonal planes are supported for d=2 only")
    else:
        raise GeometryError(f"unsupported plane kind {plane.kind!r}")


def plane_reflection(g: TorusGeometry, plane: Plane) -> SiteMap:
    _check_plane(g, plane)
    c = g.coords.copy()
    k = plane.offset
    if plane.kind == "axis":
        c[:, plane.axis] = 2 * k - c[:, plane.axis]
    elif plane.kind == "diagonal":
        c = np.stack([c[:, 1] + k, c[:, 0] - k], axis=1)
    else:
        c = np.stack([k - c[:, 1], k - c[:, 0]], axis=1)
    return SiteMap(g.index(c))


def plane_halves(g: TorusGeometry, plane: Plane) -> tuple[np.ndarray, np.ndarray]:
    """Sites of the two closed halves (T+, T-) bounded by the plane.

    Both halves contain the plane and the opposite line at distance L/2.
    """
    _check_plane(g, plane)
    c = g.coords
    if plane.kind == "axis":
        u = c[:, plane.axis] - plane.offset
    elif plane.kind == "diagonal":
        u = c[:, 0] - c[:, 1] - plane.offset
    else:
        u = c[:, 0] + c[:, 1] - plane.offset
    u = u % g.L
    half = g.L // 2
    plus = np.flatnonzero(u <= half)
    minus = np.flatnonzero((u == 0) | (u >= half))
    return plus, minus
