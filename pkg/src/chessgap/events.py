"""Block events, good/bad families and block densities.

A block event is a predicate on the configuration of one (B+1)^d block. It is
evaluated on every block of the torus through the θ_t maps, so the event seen
at block t is the base-block event reflected in the odd directions of t.
Predicates act on :class:`BlockView` arrays whose last axis runs over the
block's local sites (or local bonds) and must broadcast over leading axes.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np

from .lattice import TorusGeometry
from .models import (
    DilutedPotts,
    ModelError,
    Potts,
    random_configuration,
    wrap_angle,
)


class EventError(ValueError):
    """Raised for inconsistent event parameters or geometry mismatches."""


# -------------------------------------------------------------- block views


@dataclass
class BlockView:
    """Block-local arrays: sites on the last axis, any leading batch axes."""

    spins: np.ndarray
    occ: np.ndarray | None
    edges: np.ndarray | None
    parity: np.ndarray
    bonds: np.ndarray
    local: np.ndarray

    @property
    def shape(self):
        return self.spins.shape[:-1]

    def bond_values(self, arr: np.ndarray):
        """Values of ``arr`` at both ends of every local bond, shape (..., n_bonds)."""
        return arr[..., self.bonds[:, 0]], arr[..., self.bonds[:, 1]]

    def bond_gaps(self) -> np.ndarray:
        """|angle difference| on every local bond, reduced to [0, pi]."""
        a, b = self.bond_values(self.spins)
        return np.abs(wrap_angle(a - b))


@lru_cache(maxsize=64)
def block_edge_table(g: TorusGeometry) -> np.ndarray:
    """Flat edge index (i * n_sites + x) of every local bond of every block."""
    table = g.block_table
    bonds = g.local_bonds
    nb = g.neighbors
    out = np.empty((table.shape[0], bonds.shape[0]), dtype=np.int64)
    for k, (a, b, _) in enumerate(bonds):
        A, Bs = table[:, a], table[:, b]
        found = np.zeros(A.shape, dtype=bool)
        for i in range(g.d):
            fwd = nb[2 * i][A] == Bs
            bwd = nb[2 * i][Bs] == A
            out[fwd & ~found, k] = i * g.n_sites + A[fwd & ~found]
            found |= fwd
            out[bwd & ~found, k] = i * g.n_sites + Bs[bwd & ~found]
            found |= bwd
        if not found.all():
            raise EventError("block bond does not map to a torus bond")
    return out


def local_parity(g: TorusGeometry) -> np.ndarray:
    return g.local_offsets.sum(axis=1) % 2


def view_of_arrays(g: TorusGeometry, spins, occ=None, edges=None, blocks=None) -> BlockView:
    """View of the blocks ``blocks`` (indices into factor points; all by default).

    ``spins`` and ``occ`` have the site axis last; ``edges`` has shape (..., d, n).
    Result arrays have shape (..., n_blocks, k).
    """
    table = g.block_table
    etab = None
    if blocks is not None:
        table = table[np.asarray(blocks)]
    sp = spins[..., table]
    oc = None if occ is None else occ[..., table]
    ed = None
    if edges is not None:
        etab = block_edge_table(g)
        if blocks is not None:
            etab = etab[np.asarray(blocks)]
        flat = edges.reshape(edges.shape[:-2] + (-1,))
        ed = flat[..., etab]
    return BlockView(sp, oc, ed, local_parity(g), g.local_bonds, g.local_offsets)


def block_view(g: TorusGeometry, c, blocks=None) -> BlockView:
    return view_of_arrays(g, c.spins, c.occ, c.edges, blocks)


# ------------------------------------------------------------------- events


@dataclass(eq=False)
class BlockEvent:
    """A named predicate on a single block.

    ``reflection_symmetric`` records whether the event is invariant under the
    midplane reflections of the block. ``sampler(rng, n, g)`` optionally draws
    ``n`` block configurations inside the event as a dict of local arrays.
    ``table`` optionally lists the truth value for every discrete block code.
    """

    name: str
    predicate: Callable[[BlockView], np.ndarray]
    reflection_symmetric: bool = True
    sampler: Callable | None = None
    table: np.ndarray | None = None

    def __call__(self, view: BlockView) -> np.ndarray:
        return np.asarray(self.predicate(view), dtype=bool)

    def __repr__(self):
        return f"BlockEvent({self.name!r})"


def _always(view):
    return np.ones(view.shape, dtype=bool)


def _never(view):
    return np.zeros(view.shape, dtype=bool)


OMEGA = BlockEvent("omega", _always)
EMPTY = BlockEvent("empty", _never)


def complement(event: BlockEvent, name: str | None = None) -> BlockEvent:
    table = None if event.table is None else ~event.table
    return BlockEvent(name or f"not_{event.name}", lambda v: ~event(v), event.reflection_symmetric, table=table)


def union(a: BlockEvent, b: BlockEvent, name: str | None = None) -> BlockEvent:
    table = None if a.table is None or b.table is None else a.table | b.table
    return BlockEvent(
        name or f"{a.name}|{b.name}",
        lambda v: a(v) | b(v),
        a.reflection_symmetric and b.reflection_symmetric,
        table=table,
    )


def intersection(a: BlockEvent, b: BlockEvent, name: str | None = None) -> BlockEvent:
    table = None if a.table is None or b.table is None else a.table & b.table
    return BlockEvent(
        name or f"{a.name}&{b.name}",
        lambda v: a(v) & b(v),
        a.reflection_symmetric and b.reflection_symmetric,
        table=table,
    )


# --------------------------------------------------- discrete block codes


def local_states(m, spins, occ=None) -> np.ndarray:
    """Per-site discrete state index in [0, n_local)."""
    if isinstance(m, Potts):
        return spins - 1
    if isinstance(m, DilutedPotts):
        return occ * m.q + (spins - 1)
    raise ModelError(f"{type(m).__name__} has no finite local state space")


def states_to_arrays(m, states):
    """Inverse of :func:`local_states`: (spins, occ)."""
    if isinstance(m, Potts):
        return states + 1, None
    if isinstance(m, DilutedPotts):
        return states % m.q + 1, states // m.q
    raise ModelError(f"{type(m).__name__} has no finite local state space")


def block_code_space(m, g: TorusGeometry) -> int:
    return m.n_local ** (g.B + 1) ** g.d


def all_block_views(m, g: TorusGeometry) -> BlockView:
    """Views of every discrete block configuration, indexed by block code.

    Block code = sum_u state(u) * n_local**u over the local sites u.
    """
    k = (g.B + 1) ** g.d
    size = m.n_local**k
    codes = np.arange(size, dtype=np.int64)
    states = (codes[:, None] // (m.n_local ** np.arange(k, dtype=np.int64))[None, :]) % m.n_local
    spins, occ = states_to_arrays(m, states)
    return BlockView(spins, occ, None, local_parity(g), g.local_bonds, g.local_offsets)


def event_table(event: BlockEvent, m, g: TorusGeometry, budget: int = 10**7) -> np.ndarray:
    """Truth table of a discrete block event over all block codes."""
    if event.table is not None:
        return np.asarray(event.table, dtype=bool)
    size = block_code_space(m, g)
    if size > budget:
        raise EventError(f"block code space {size} exceeds budget {budget}")
    return event(all_block_views(m, g))


def table_event(name: str, table: np.ndarray, m, g: TorusGeometry) -> BlockEvent:
    """A discrete block event given by its truth table over block codes."""
    table = np.asarray(table, dtype=bool)
    if table.size != block_code_space(m, g):
        raise EventError("table size does not match the block code space")
    k = (g.B + 1) ** g.d
    weights = m.n_local ** np.arange(k, dtype=np.int64)

    def pred(view):
        st = local_states(m, view.spins, view.occ)
        return table[st @ weights]

    sym = all(np.array_equal(table, table[rc]) for rc in _reflected_codes(m, g))
    return BlockEvent(name, pred, sym, table=table)


def _reflected_codes(m, g: TorusGeometry) -> list[np.ndarray]:
    """For each axis, the code of every block configuration reflected through that midplane."""
    k = (g.B + 1) ** g.d
    codes = np.arange(m.n_local**k, dtype=np.int64)
    weights = m.n_local ** np.arange(k, dtype=np.int64)
    states = (codes[:, None] // weights[None, :]) % m.n_local
    off = g.local_offsets
    lookup = {tuple(u): i for i, u in enumerate(off)}
    out = []
    for axis in range(g.d):
        mirrored = off.copy()
        mirrored[:, axis] = g.B - mirrored[:, axis]
        perm = np.array([lookup[tuple(u)] for u in mirrored])
        out.append(states[:, perm] @ weights)
    return out


# ---------------------------------------------------------------- families


class BondClass(enum.IntEnum):
    STRONG = 0
    WEAK = 1
    DISORDERED = 2


@dataclass(eq=False)
class GoodFamily:
    """Good events G_1..G_r on B-blocks; the bad event is their joint complement.

    ``classifier(view)`` optionally returns labels 0..r-1 for goods and r for bad
    in one pass; it must agree with the predicates.
    """

    name: str
    goods: list
    B: int = 1
    classifier: Callable | None = None
    model_kinds: tuple = ()
    params: dict = field(default_factory=dict)

    @property
    def r(self) -> int:
        return len(self.goods)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.goods]

    @property
    def bad(self) -> BlockEvent:
        goods = self.goods
        table = None
        if all(e.table is not None for e in goods):
            table = ~np.any([e.table for e in goods], axis=0)

        def pred(view):
            hit = np.zeros(view.shape, dtype=bool)
            for e in goods:
                hit |= e(view)
            return ~hit

        return BlockEvent("bad", pred, all(e.reflection_symmetric for e in goods), table=table)

    def event(self, name: str) -> BlockEvent:
        if name == "bad":
            return self.bad
        for e in self.goods:
            if e.name == name:
                return e
        raise EventError(f"family {self.name} has no event {name!r}")

    def indicators(self, view: BlockView) -> np.ndarray:
        """Boolean array (..., r) of good-event indicators."""
        return np.stack([e(view) for e in self.goods], axis=-1)

    def classify(self, view: BlockView) -> np.ndarray:
        """Label per block: index of the (first) good event that holds, r if bad."""
        if self.classifier is not None:
            return self.classifier(view)
        ind = self.indicators(view)
        lab = np.argmax(ind, axis=-1)
        return np.where(ind.any(axis=-1), lab, self.r)


def _all_equal(a):
    return np.all(a == a[..., :1], axis=-1)


def potts_events(q: int, B: int = 1) -> GoodFamily:
    """Ordered events ord_m (block constant equal to m) and the disordered event.

    ``dis`` requires every nearest-neighbour pair of the block to differ. For
    q = 2 this event is the union of two checkerboards, which are exposed as
    ``chk_1`` (even sites carry label 1) and ``chk_2`` instead.
    """
    if q < 2:
        raise EventError("q must be >= 2")
    goods = []
    for m in range(1, q + 1):
        goods.append(BlockEvent(f"ord_{m}", lambda v, m=m: np.all(v.spins == m, axis=-1)))

    def dis(v):
        a, b = v.bond_values(v.spins)
        return np.all(a != b, axis=-1)

    if q == 2:
        for m in (1, 2):
            def chk(v, m=m):
                want = np.where(v.parity == 0, m, 3 - m)
                return np.all(v.spins == want, axis=-1)

            goods.append(BlockEvent(f"chk_{m}", chk, reflection_symmetric=(B % 2 == 0)))
        return GoodFamily("potts_q2", goods, B, model_kinds=("potts",), params={"q": 2})

    goods.append(BlockEvent("dis", dis))

    def classifier(v):
        ordered = _all_equal(v.spins)
        return np.where(ordered, v.spins[..., 0] - 1, np.where(dis(v), q, q + 1)).astype(np.int64)

    return GoodFamily("potts", goods, B, classifier=classifier, model_kinds=("potts",), params={"q": q})


def diluted_events(kind: str = "potts", q: int | None = None, refine: bool = False) -> GoodFamily:
    """Dense, even and odd occupation events on 1-blocks.

    With ``refine`` (diluted Potts only) the dense event splits into dense_m,
    requiring full occupation with every label equal to m.
    """
    if kind not in ("potts", "xy"):
        raise EventError(f"kind must be 'potts' or 'xy', got {kind!r}")
    goods = []
    if refine:
        if kind != "potts" or q is None:
            raise EventError("the dense_m refinement needs the diluted Potts model and q")
        for m in range(1, q + 1):
            goods.append(
                BlockEvent(
                    f"dense_{m}",
                    lambda v, m=m: np.all(v.occ == 1, axis=-1) & np.all(v.spins == m, axis=-1),
                    sampler=_occ_sampler("dense", m),
                )
            )
    else:
        goods.append(BlockEvent("dense", lambda v: np.all(v.occ == 1, axis=-1), sampler=_occ_sampler("dense")))
    goods.append(
        BlockEvent(
            "even",
            lambda v: np.all(v.occ == (v.parity == 0), axis=-1),
            reflection_symmetric=False,
            sampler=_occ_sampler("even"),
        )
    )
    goods.append(
        BlockEvent(
            "odd",
            lambda v: np.all(v.occ == (v.parity == 1), axis=-1),
            reflection_symmetric=False,
            sampler=_occ_sampler("odd"),
        )
    )
    model = "diluted_potts" if kind == "potts" else "diluted_xy"
    return GoodFamily(f"diluted_{kind}", goods, 1, model_kinds=(model,), params={"q": q, "refine": refine})


def _occ_sampler(pattern, label=None):
    def sample(rng, n, m, g):
        par = local_parity(g)
        k = par.size
        if pattern == "dense":
            occ = np.ones((n, k), dtype=np.int64)
        else:
            want = 0 if pattern == "even" else 1
            occ = np.broadcast_to((par == want).astype(np.int64), (n, k)).copy()
        if isinstance(m, DilutedPotts):
            spins = rng.integers(1, m.q + 1, size=(n, k))
            if label is not None:
                spins[:] = label
        else:
            spins = rng.uniform(-np.pi, np.pi, size=(n, k))
        return {"spins": spins, "occ": occ}

    return sample


def o2af_events(kappa: float = 0.1, B: int = 4) -> GoodFamily:
    """Stripe events on B-blocks for the O(2) antiferromagnet.

    ``stripes_h``: spins in a common row are aligned (S_x.S_y >= 1 - kappa) and
    vertical neighbours antialigned (S_x.S_{x+e2} <= -1 + kappa). ``stripes_v`` is
    the same with the axes exchanged.
    """
    if not 0 < kappa < 1:
        raise EventError("kappa must lie in (0, 1)")
    if B < 1 or B % 2:
        raise EventError("B must be a positive even integer")

    def make(axis):
        # axis = 1: rows are lines of constant x2 (horizontal stripes)
        def pred(v):
            off = v.local
            phi = v.spins
            ok = np.ones(v.shape, dtype=bool)
            lines = {}
            for idx, u in enumerate(off):
                lines.setdefault(int(u[axis]), []).append(idx)
            for members in lines.values():
                mem = np.array(members)
                a = phi[..., mem]
                dots = np.cos(a[..., :, None] - a[..., None, :])
                ok &= np.all(dots >= 1 - kappa, axis=(-1, -2))
            across = v.bonds[v.bonds[:, 2] == axis]
            dots = np.cos(phi[..., across[:, 0]] - phi[..., across[:, 1]])
            ok &= np.all(dots <= -1 + kappa, axis=-1)
            return ok

        def sample(rng, n, m, g):
            off = g.local_offsets
            width = np.arccos(1 - kappa)
            base = rng.uniform(-np.pi, np.pi, size=(n, 1))
            noise = rng.uniform(0, width, size=(n, off.shape[0]))
            phi = base + np.pi * off[:, axis][None, :] + noise
            return {"spins": wrap_angle(phi)}

        return BlockEvent("stripes_h" if axis == 1 else "stripes_v", pred, sampler=sample)

    return GoodFamily("o2af", [make(1), make(0)], B, model_kinds=("o2af",), params={"kappa": kappa})


def _nlvm_thresholds(C, p):
    if C < 1:
        raise EventError(f"need C >= 1, got {C}")
    if C > np.sqrt(p):
        raise EventError(f"need C <= sqrt(p): C={C}, sqrt(p)={np.sqrt(p):.6g} (thresholds cross)")
    return 1.0 / (C * np.sqrt(p)), C / np.sqrt(p)


def classify_bond(dphi, C: float, p: float):
    """Bond class of an angle difference: strong, weak or disordered.

    |dphi| <= 1/(C sqrt p) is strong, |dphi| >= C/sqrt p is disordered, weak otherwise.
    """
    lo, hi = _nlvm_thresholds(C, p)
    a = np.abs(wrap_angle(dphi))
    out = np.where(a <= lo, BondClass.STRONG, np.where(a >= hi, BondClass.DISORDERED, BondClass.WEAK))
    if np.ndim(out) == 0:
        return BondClass(int(out))
    return out.astype(np.int64)


def nlvm_events(C: float, p: float) -> GoodFamily:
    """All block bonds strongly ordered (``so``) or all disordered (``dis``)."""
    lo, hi = _nlvm_thresholds(C, p)

    def so(v):
        return np.all(v.bond_gaps() <= lo, axis=-1)

    def dis(v):
        return np.all(v.bond_gaps() >= hi, axis=-1)

    def sample_so(rng, n, m, g):
        k = g.local_offsets.shape[0]
        base = rng.uniform(-np.pi, np.pi, size=(n, 1))
        return {"spins": wrap_angle(base + rng.uniform(0, lo, size=(n, k)))}

    def sample_dis(rng, n, m, g):
        k = g.local_offsets.shape[0]
        bonds = g.local_bonds
        out = np.empty((0, k))
        while out.shape[0] < n:
            phi = rng.uniform(-np.pi, np.pi, size=(2 * n, k))
            gaps = np.abs(wrap_angle(phi[:, bonds[:, 0]] - phi[:, bonds[:, 1]]))
            out = np.vstack([out, phi[np.all(gaps >= hi, axis=1)]])
        return {"spins": out[:n]}

    goods = [BlockEvent("so", so, sampler=sample_so), BlockEvent("dis", dis, sampler=sample_dis)]
    return GoodFamily("nlvm", goods, 1, model_kinds=("nlvm",), params={"C": C, "p": p})


def nlvm_bad_split(C: float, p: float) -> tuple[BlockEvent, BlockEvent]:
    """(B_wo, B_mix): some weak bond; two adjacent bonds, one strong and one disordered."""
    _nlvm_thresholds(C, p)

    def classes(v):
        return classify_bond(v.bond_gaps(), C, p)

    def wo(v):
        return np.any(classes(v) == BondClass.WEAK, axis=-1)

    def mix(v):
        cl = classes(v)
        bonds = v.bonds
        hit = np.zeros(v.shape, dtype=bool)
        for i, j in itertools.combinations(range(bonds.shape[0]), 2):
            if set(bonds[i, :2]) & set(bonds[j, :2]):
                a, b = cl[..., i], cl[..., j]
                hit |= ((a == BondClass.STRONG) & (b == BondClass.DISORDERED)) | (
                    (a == BondClass.DISORDERED) & (b == BondClass.STRONG)
                )
        return hit

    return BlockEvent("B_wo", wo), BlockEvent("B_mix", mix)


def magnetostriction_events(eta: float, eps: float, r_max: float | None = None) -> GoodFamily:
    """Contracted (all block bonds r <= eta) and expanded (r >= eta + eps, all spins +-1)."""
    if not (eta > 0 and eps > 0):
        raise EventError("need 0 < eta and eps > 0")
    if r_max is not None and not eta + eps < r_max:
        raise EventError("need eta + eps < r_max")
    top = r_max if r_max is not None else eta + 2 * eps + 1.0

    def contr(v):
        return np.all(v.edges <= eta, axis=-1)

    def expanded(sign):
        def pred(v):
            return np.all(v.edges >= eta + eps, axis=-1) & np.all(v.spins == sign, axis=-1)

        return pred

    def s_contr(rng, n, m, g):
        k, nb = g.local_offsets.shape[0], g.local_bonds.shape[0]
        return {
            "spins": rng.choice(np.array([-1, 1]), size=(n, k)),
            "edges": eta * (1.0 - rng.random((n, nb))),
        }

    def s_exp(sign):
        def sample(rng, n, m, g):
            k, nb = g.local_offsets.shape[0], g.local_bonds.shape[0]
            return {
                "spins": np.full((n, k), sign, dtype=np.int64),
                "edges": rng.uniform(eta + eps, top, size=(n, nb)),
            }

        return sample

    goods = [
        BlockEvent("contr", contr, sampler=s_contr),
        BlockEvent("exp_plus", expanded(1), sampler=s_exp(1)),
        BlockEvent("exp_minus", expanded(-1), sampler=s_exp(-1)),
    ]
    return GoodFamily(
        "magnetostriction", goods, 1, model_kinds=("magnetostriction",), params={"eta": eta, "eps": eps}
    )


# ------------------------------------------------------------ block density


def density_blocks(g: TorusGeometry, N: int | None = None) -> np.ndarray:
    """Factor-point indices of the N^d blocks with all coordinates below N."""
    m = g.block_side
    if N is None:
        N = m
    if N < 1 or N > m:
        raise EventError(f"need 1 <= N <= L/B = {m}, got {N}")
    pts = np.array(g.factor_points())
    return np.flatnonzero(np.all(pts < N, axis=1))


def block_density(event: BlockEvent, g: TorusGeometry, c, N: int | None = None) -> float:
    """Fraction of the blocks of Λ_{N-1} (all blocks by default) where ``event`` holds."""
    if c.spins.shape[-1] != g.n_sites:
        raise EventError("configuration does not match the geometry")
    view = block_view(g, c, density_blocks(g, N))
    return float(np.mean(event(view)))


def family_densities(f: GoodFamily, g: TorusGeometry, c, N: int | None = None) -> dict:
    """Densities of every good event and of the bad event from one classification."""
    view = block_view(g, c, density_blocks(g, N))
    lab = f.classify(view)
    counts = np.bincount(lab.ravel(), minlength=f.r + 1) / lab.size
    out = {name: float(counts[i]) for i, name in enumerate(f.names)}
    out["bad"] = float(counts[f.r])
    return out


# ----------------------------------------------------------- family checks


@dataclass
class FamilyReport:
    family: str
    passed: bool
    method: str
    checked: int
    failure: str | None = None
    witness: dict | None = None

    def to_dict(self):
        return {
            "family": self.family,
            "passed": self.passed,
            "method": self.method,
            "checked": self.checked,
            "failure": self.failure,
            "witness": self.witness,
        }


def _neighbour_pairs(g: TorusGeometry):
    """(t1, t2) factor-point index pairs: t1 in {0,1}^d, t2 = t1 +- e_i."""
    pts = g.factor_points()
    where = {p: i for i, p in enumerate(pts)}
    m = g.block_side
    out = []
    for t1 in itertools.product((0, 1), repeat=g.d):
        for i in range(g.d):
            for s in (1, -1):
                t2 = list(t1)
                t2[i] = (t2[i] + s) % m
                out.append((where[tuple(t1)], where[tuple(t2)]))
    return out


def _check_geometry(f: GoodFamily, m) -> TorusGeometry:
    return TorusGeometry(2, 4 * f.B, f.B)


def check_family(
    f: GoodFamily,
    m,
    g: TorusGeometry | None = None,
    samples: int = 10**6,
    budget: int = 2 * 10**6,
    seed: int = 0,
) -> FamilyReport:
    """Check that the goods are pairwise disjoint and that neighbouring blocks
    never carry different goods.

    Discrete models are searched exhaustively over the union of two adjacent
    blocks whenever that space fits in ``budget``; otherwise (and for continuous
    models) a randomized search draws ``samples`` configurations per ordered
    pair of goods from the event samplers, pinning the shared face to the first
    block's values.
    """
    if g is None:
        g = _check_geometry(f, m)
    if g.B != f.B:
        raise EventError(f"geometry block scale {g.B} differs from the family's {f.B}")
    if g.block_side < 4:
        raise EventError("family checks need L/B >= 4 so that +-e_i neighbours differ")
    pairs = _neighbour_pairs(g)
    if getattr(m, "discrete", False):
        union_sites = np.unique(np.concatenate([g.block_table[[a, b]].ravel() for a, b in pairs[:1]]))
        if m.n_local ** union_sites.size <= budget:
            return _exhaustive_check(f, m, g, pairs)
    return _random_check(f, m, g, pairs, samples, seed)


def _witness(g, spins, occ, edges, t1, t2, i, j, f):
    pts = g.factor_points()
    w = {
        "t1": list(pts[t1]),
        "t2": list(pts[t2]),
        "events": [f.names[i], f.names[j]],
        "spins": np.asarray(spins).tolist(),
    }
    if occ is not None:
        w["occ"] = np.asarray(occ).tolist()
    if edges is not None:
        w["edges"] = np.asarray(edges).tolist()
    return w


def _exhaustive_check(f, m, g, pairs):
    checked = 0
    for a, b in pairs:
        sites = np.unique(g.block_table[[a, b]].ravel())
        n = sites.size
        codes = np.arange(m.n_local**n, dtype=np.int64)
        st = (codes[:, None] // (m.n_local ** np.arange(n, dtype=np.int64))[None, :]) % m.n_local
        full = np.zeros((codes.size, g.n_sites), dtype=np.int64)
        full[:, sites] = st
        spins, occ = states_to_arrays(m, full)
        view = view_of_arrays(g, spins, occ, None, [a, b])
        ind = f.indicators(view)  # (n_cfg, 2, r)
        checked += codes.size
        res = _scan_indicators(ind, f)
        if res is not None:
            row, kind, i, j = res
            return FamilyReport(
                f.name, False, "exhaustive", checked, kind,
                _witness(g, spins[row], None if occ is None else occ[row], None, a, b, i, j, f),
            )
    return FamilyReport(f.name, True, "exhaustive", checked)


def _scan_indicators(ind, f):
    """First violation in indicators of shape (n, 2, r): (row, kind, i, j) or None."""
    count = ind.sum(axis=-1)
    bad_rows = np.flatnonzero(np.any(count > 1, axis=-1))
    if bad_rows.size:
        row = bad_rows[0]
        blk = int(np.flatnonzero(count[row] > 1)[0])
        ij = np.flatnonzero(ind[row, blk])
        return row, "disjointness", int(ij[0]), int(ij[1])
    r = f.r
    for i in range(r):
        for j in range(r):
            if i == j:
                continue
            hit = ind[:, 0, i] & ind[:, 1, j]
            if hit.any():
                return int(np.flatnonzero(hit)[0]), "neighbour compatibility", i, j
    return None


def _random_check(f, m, g, pairs, samples, seed):
    if any(e.sampler is None for e in f.goods):
        raise EventError(f"family {f.name} lacks samplers needed for a randomized check")
    rng = np.random.default_rng(seed)
    checked = 0
    chunk = 4096
    base_cfg = random_configuration(m, g, rng)
    etab = block_edge_table(g) if base_cfg.edges is not None else None
    for i, gi in enumerate(f.goods):
        for j, gj in enumerate(f.goods):
            done = 0
            while done < samples:
                n = min(chunk, samples - done)
                a, b = pairs[(done // chunk) % len(pairs)]
                spins = np.broadcast_to(base_cfg.spins, (n, g.n_sites)).copy()
                occ = None if base_cfg.occ is None else np.broadcast_to(base_cfg.occ, (n, g.n_sites)).copy()
                edges = None if base_cfg.edges is None else np.broadcast_to(
                    base_cfg.edges, (n,) + base_cfg.edges.shape
                ).copy()
                # second block first, then the first block overwrites the shared face
                for blk, ev in ((b, gj), (a, gi)):
                    smp = ev.sampler(rng, n, m, g)
                    sites = g.block_table[blk]
                    spins[:, sites] = smp["spins"]
                    if occ is not None and "occ" in smp:
                        occ[:, sites] = smp["occ"]
                    if edges is not None and "edges" in smp:
                        flat = edges.reshape(n, -1)
                        flat[:, etab[blk]] = smp["edges"]
                view = view_of_arrays(g, spins, occ, edges, [a, b])
                ind = f.indicators(view)
                checked += n
                done += n
                res = _scan_indicators(ind, f)
                if res is not None:
                    row, kind, ii, jj = res
                    return FamilyReport(
                        f.name, False, "randomized", checked, kind,
                        _witness(
                            g, spins[row], None if occ is None else occ[row],
                            None if edges is None else edges[row], a, b, ii, jj, f,
                        ),
                    )
    return FamilyReport(f.name, True, "randomized", checked)
