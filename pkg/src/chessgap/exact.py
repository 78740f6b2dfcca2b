"""Exact torus measures at tiny sizes and the checks built on them.

Discrete models are enumerated state by state; continuous ones are
discretised on a midpoint grid. On top of these measures the module computes
probabilities of disseminated block events, chessboard margins and
reflection-positivity Gram matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .events import (
    BlockEvent,
    BlockView,
    event_table,
    states_to_arrays,
    view_of_arrays,
)
from .lattice import Plane, TorusGeometry, plane_halves, plane_reflection
from .models import (
    DilutedPotts,
    DilutedXY,
    Magnetostriction,
    ModelError,
    NonlinearFerromagnet,
    O2AF,
    Potts,
    energy_arrays,
)

DEFAULT_BUDGET = 10**8
CHUNK = 1 << 18


class BudgetError(RuntimeError):
    """Raised when an exact computation would exceed its state budget."""

    def __init__(self, what: str, size: float, budget: float):
        super().__init__(f"{what}: {size:.3g} states exceed the budget of {budget:.3g}")
        self.size = size
        self.budget = budget


@dataclass(eq=False)
class ExactMeasure:
    """Normalised weights over an enumerated configuration space.

    State i encodes one value index per variable in mixed radix: site x has
    digit (i // radix**x) % radix for x < n_sites, then edge variables follow.
    """

    model: object
    geometry: TorusGeometry
    beta: float
    weights: np.ndarray
    log_z: float
    site_radix: int
    edge_radix: int = 0
    grid: int | None = None
    shift: float = 0.0
    cell_log_volume: float = 0.0
    _codes: dict = field(default_factory=dict, repr=False)

    @property
    def Z(self) -> float:
        return math.exp(self.log_z)

    @property
    def size(self) -> int:
        return self.weights.size

    @property
    def discrete(self) -> bool:
        return self.grid is None

    def digits(self, idx: np.ndarray):
        """(site digits, edge digits) for state indices ``idx``."""
        g = self.geometry
        n = g.n_sites
        idx = np.asarray(idx, dtype=np.int64)
        site_pw = self.site_radix ** np.arange(n, dtype=np.int64)
        sites = (idx[:, None] // site_pw[None, :]) % self.site_radix
        edges = None
        if self.edge_radix:
            rest = idx // self.site_radix**n
            ne = g.d * n
            edge_pw = self.edge_radix ** np.arange(ne, dtype=np.int64)
            edges = (rest[:, None] // edge_pw[None, :]) % self.edge_radix
        return sites, edges

    def decode(self, idx: np.ndarray):
        """Model arrays (spins, occ, edges) for state indices ``idx``."""
        return _decode(self, *self.digits(idx))

    def chunks(self):
        for start in range(0, self.size, CHUNK):
            yield np.arange(start, min(start + CHUNK, self.size), dtype=np.int64)

    def expectation(self, fn) -> float:
        """E[fn(spins, occ, edges)] with fn vectorised over the leading axis."""
        total = 0.0
        for idx in self.chunks():
            total += float(np.dot(self.weights[idx], fn(*self.decode(idx))))
        return total

    def mean_energy(self) -> float:
        m, g = self.model, self.geometry
        return self.expectation(lambda s, o, e: energy_arrays(m, g, s, o, e))


def _angles(G: int, shift: float) -> np.ndarray:
    return -np.pi + (np.arange(G) + 0.5) * (2 * np.pi / G) + shift


def _decode(meas: ExactMeasure, sites, edges):
    m = meas.model
    if meas.discrete:
        spins, occ = states_to_arrays(m, sites)
        return spins, occ, None
    G = meas.grid
    if isinstance(m, (NonlinearFerromagnet, O2AF)):
        return _angles(G, meas.shift)[sites], None, None
    if isinstance(m, DilutedXY):
        return _angles(G, meas.shift)[sites % G], sites // G, None
    if isinstance(m, Magnetostriction):
        r = (np.arange(G) + 0.5) * (m.r_max / G)
        e = r[edges].reshape(edges.shape[0], meas.geometry.d, -1)
        return 2 * sites - 1, None, e
    raise ModelError(f"unsupported model {m!r}")


def _build(m, g, beta, site_radix, edge_radix, grid, shift, cell_log_volume, budget):
    n = g.n_sites
    size = float(site_radix) ** n * (float(edge_radix) ** (g.d * n) if edge_radix else 1.0)
    if size > budget:
        raise BudgetError("enumeration", size, budget)
    size = int(size)
    meas = ExactMeasure(m, g, float(beta), np.empty(0), 0.0, site_radix, edge_radix, grid, shift, cell_log_volume)
    logw = np.empty(size)
    for start in range(0, size, CHUNK):
        idx = np.arange(start, min(start + CHUNK, size), dtype=np.int64)
        logw[idx] = -beta * energy_arrays(m, g, *meas.decode(idx))
    lz = float(logsumexp(logw))
    meas.weights = np.exp(logw - lz)
    meas.log_z = lz + cell_log_volume
    return meas


def enumerate_measure(m, g: TorusGeometry, beta: float, budget: float = DEFAULT_BUDGET) -> ExactMeasure:
    """Exact torus measure of a discrete model by full enumeration."""
    if not isinstance(m, (Potts, DilutedPotts)):
        raise ModelError("enumeration needs a discrete model (Potts or DilutedPotts)")
    if beta < 0:
        raise ModelError("beta must be >= 0")
    return _build(m, g, beta, m.n_local, 0, None, 0.0, 0.0, budget)


def grid_measure(
    m, g: TorusGeometry, beta: float, G: int = 32, shift: float = 0.0, budget: float = DEFAULT_BUDGET
) -> ExactMeasure:
    """Midpoint-grid discretisation of a continuous model.

    Angles take G values per site, offset by ``shift``; bond lengths of the
    magnetostriction model take G midpoints of (0, r_max]. Z includes the cell
    volumes, so it approximates the integral against the a priori measure.
    """
    if beta < 0:
        raise ModelError("beta must be >= 0")
    if G < 1:
        raise ModelError("G must be >= 1")
    n = g.n_sites
    cell = 2 * np.pi / G
    if isinstance(m, (NonlinearFerromagnet, O2AF)):
        if isinstance(m, O2AF) and g.d != 2:
            raise ModelError("O2AF is defined on d=2 tori only")
        return _build(m, g, beta, G, 0, G, shift, n * math.log(cell), budget)
    if isinstance(m, DilutedXY):
        return _build(m, g, beta, 2 * G, 0, G, shift, n * math.log(cell), budget)
    if isinstance(m, Magnetostriction):
        vol = g.d * n * math.log(m.r_max / G)
        return _build(m, g, beta, 2, G, G, 0.0, vol, budget)
    raise ModelError("grid measures need a continuous model")


# ------------------------------------------------------- disseminated events


def _block_codes(meas: ExactMeasure, t_index: int) -> np.ndarray:
    if t_index not in meas._codes:
        m = meas.model
        sites = meas.geometry.block_table[t_index]
        k = sites.size
        weights = m.n_local ** np.arange(k, dtype=np.int64)
        codes = np.empty(meas.size, dtype=np.int64)
        for idx in meas.chunks():
            digits, _ = meas.digits(idx)
            codes[idx] = digits[:, sites] @ weights
        meas._codes[t_index] = codes
    return meas._codes[t_index]


def _t_index(g: TorusGeometry, t) -> int:
    t = g.check_factor_point(t)
    m = g.block_side
    return int(sum(v * m**i for i, v in enumerate(t)))


def prob_disseminated(meas: ExactMeasure, events) -> float:
    """P(every listed block t carries its event A), events = [(t, A), ...]."""
    g = meas.geometry
    items = [(_t_index(g, t), A) for t, A in events]
    ts = [t for t, _ in items]
    if len(set(ts)) != len(ts):
        raise ValueError("block positions must be distinct")
    if meas.discrete:
        tables = [(t, event_table(A, meas.model, g)) for t, A in items]
        # sure events are dropped so that they contribute exactly 1
        tables = [(t, tab) for t, tab in tables if not tab.all()]
        if not tables:
            return 1.0
        mask = np.ones(meas.size, dtype=bool)
        for t, tab in tables:
            mask &= tab[_block_codes(meas, t)]
        return float(np.sum(meas.weights[mask]))
    if not items:
        return 1.0
    total = 0.0
    blocks = np.array(ts)
    for idx in meas.chunks():
        spins, occ, edges = meas.decode(idx)
        view = view_of_arrays(g, spins, occ, edges, blocks)
        ok = np.ones(idx.size, dtype=bool)
        for k, (_, A) in enumerate(items):
            sub = _subview(view, k)
            ok &= A(sub)
        total += float(np.sum(meas.weights[idx][ok]))
    return total


def _subview(view, k):
    return BlockView(
        view.spins[..., k, :],
        None if view.occ is None else view.occ[..., k, :],
        None if view.edges is None else view.edges[..., k, :],
        view.parity,
        view.bonds,
        view.local,
    )


def disseminated(meas: ExactMeasure, A: BlockEvent) -> float:
    """P(A holds on every block)."""
    g = meas.geometry
    return prob_disseminated(meas, [(t, A) for t in g.factor_points()])


def p_finite(A: BlockEvent, g: TorusGeometry, m=None, beta: float | None = None, meas: ExactMeasure | None = None,
             G: int = 32) -> float:
    """(P(A disseminated over the torus))^(1/|T~|)."""
    if meas is None:
        if m is None or beta is None:
            raise ValueError("need either a measure or (model, beta)")
        meas = enumerate_measure(m, g, beta) if getattr(m, "discrete", False) else grid_measure(m, g, beta, G)
    return disseminated(meas, A) ** (1.0 / g.n_blocks)


@dataclass
class ChessboardReport:
    lhs: float
    rhs: float
    margin: float
    passed: bool
    tol: float = 1e-10

    def to_dict(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "margin": self.margin, "passed": self.passed, "tol": self.tol}


def chessboard_check(meas: ExactMeasure, events, tol: float = 1e-10) -> ChessboardReport:
    """Compare P(∩_j θ_{t_j} A_j) with ∏_j P(A_j disseminated)^(1/|T~|)."""
    g = meas.geometry
    lhs = prob_disseminated(meas, events)
    rhs = 1.0
    cache = {}
    for _, A in events:
        if id(A) not in cache:
            cache[id(A)] = disseminated(meas, A) ** (1.0 / g.n_blocks)
        rhs *= cache[id(A)]
    margin = lhs - rhs
    return ChessboardReport(lhs, rhs, margin, bool(margin <= tol), tol)


# -------------------------------------------------------- reflection positivity


@dataclass
class GramReport:
    plane: dict
    min_eigenvalue: float
    asymmetry: float
    n_blocks: int
    block_size: int
    passed: bool
    tol: float = 1e-10

    def to_dict(self):
        return dict(self.__dict__)


def rp_gram_check(meas: ExactMeasure, plane: Plane, tol: float = 1e-10, max_block: int = 4096,
                  max_total: float = 10**7) -> GramReport:
    """Gram matrix M_ab = E[X_a θ(X_b)] over indicators of configurations on T+.

    Indicators that differ on sites fixed by the reflection are orthogonal, so M
    splits into blocks indexed by the configuration on those sites; each block is
    checked for symmetry and a nonnegative spectrum.
    """
    if not meas.discrete:
        raise ModelError("Gram checks need a discrete measure")
    g = meas.geometry
    theta = plane_reflection(g, plane)
    plus, _ = plane_halves(g, plane)
    fixed = np.intersect1d(plus, theta.fixed_points())
    free = np.setdiff1d(plus, fixed)
    radix = meas.site_radix
    bsize = radix ** free.size
    nblocks = radix ** fixed.size
    if bsize > max_block or float(bsize) ** 2 * nblocks > max_total:
        raise BudgetError("Gram matrix", float(bsize) ** 2 * nblocks, max_total)
    M = np.zeros((nblocks, bsize, bsize))
    fw = radix ** np.arange(fixed.size, dtype=np.int64)
    aw = radix ** np.arange(free.size, dtype=np.int64)
    image = theta.perm[free]
    for idx in meas.chunks():
        digits, _ = meas.digits(idx)
        f = digits[:, fixed] @ fw
        a = digits[:, free] @ aw
        b = digits[:, image] @ aw
        np.add.at(M, (f, a, b), meas.weights[idx])
    asym = float(np.max(np.abs(M - M.transpose(0, 2, 1))))
    sym = 0.5 * (M + M.transpose(0, 2, 1))
    mins = [float(np.linalg.eigvalsh(blk)[0]) for blk in sym if blk.any()]
    lam = min(mins) if mins else 0.0
    return GramReport(plane.to_dict(), lam, asym, nblocks, bsize, bool(lam >= -tol and asym <= tol), tol)


# ---------------------------------------------- constrained partition functions


PATTERNS = ("so", "dis", "wo", "mix")


@dataclass
class ConstrainedZ:
    value: float
    pattern: str
    G: int
    diagnostic: str | None = None

    def __float__(self):
        return float(self.value)


def _class_intervals(cls: str, lo: float, hi: float):
    """Subsets of (-pi, pi] where |Δ| falls in the class, as closed intervals."""
    if cls == "so":
        return [(-lo, lo)]
    if cls == "wo":
        return [] if hi <= lo else [(-hi, -lo), (lo, hi)]
    if cls == "dis":
        return [] if hi > np.pi else [(-np.pi, -hi), (hi, np.pi)]
    raise ValueError(cls)


def _gl_rule(intervals, G):
    x, w = np.polynomial.legendre.leggauss(G)
    nodes, weights = [], []
    for a, b in intervals:
        nodes.append(0.5 * (b - a) * x + 0.5 * (a + b))
        weights.append(0.5 * (b - a) * w)
    if not nodes:
        return np.empty(0), np.empty(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _mix_classes():
    # sites a=(0,0), b=(1,0), c=(0,1), d=(1,1) on the 2-torus; cycle a->b->d->c->a
    # even horizontal line (a-b) and even vertical line (a-c) strong, the others disordered
    return ("so", "dis", "dis", "so")


def constrained_partition(
    m: NonlinearFerromagnet, g: TorusGeometry, beta: float, pattern: str, C: float, G: int = 64
) -> ConstrainedZ:
    """Partition function restricted by bond classes, on the 2x2 torus.

    Each neighbouring pair of the 2x2 torus is joined by two bonds, so the
    integrand is a product over the four pairs of the 4-cycle a-b-d-c of
    exp(2β((1+cos Δ)/2)^p) times the class indicator. Rotation invariance
    removes one angle; the remaining three are integrated with G-point
    Gauss-Legendre rules on every interval of the allowed set, the last one on
    the exact intersection of its own constraint with the closing bond's.
    """
    if not isinstance(m, NonlinearFerromagnet):
        raise ModelError("constrained partition functions are defined for the nonlinear ferromagnet")
    if g.d != 2 or g.L != 2:
        raise ModelError("constrained partition functions are implemented for the 2x2 torus")
    if pattern not in PATTERNS:
        raise ValueError(f"pattern must be one of {PATTERNS}")
    if C < 1 or C > math.sqrt(m.p):
        raise ModelError(f"need 1 <= C <= sqrt(p), got C={C}")
    lo, hi = 1.0 / (C * math.sqrt(m.p)), C / math.sqrt(m.p)
    classes = _mix_classes() if pattern == "mix" else (pattern,) * 4
    sets = [_class_intervals(c, lo, hi) for c in classes]
    if any(not s for s in sets):
        return ConstrainedZ(0.0, pattern, G, f"empty constraint set for class in {classes} at C={C}, p={m.p}")

    def f(x):
        return np.exp(2.0 * beta * ((1.0 + np.cos(x)) / 2.0) ** m.p)

    x1, w1 = _gl_rule(sets[0], G)
    x2, w2 = _gl_rule(sets[1], G)
    outer = np.add.outer(x1, x2).ravel()
    wout = np.outer(w1 * f(x1), w2 * f(x2)).ravel()
    # Δ3 must lie in its own class and make the closing bond Δ4 = -(s + Δ3) lie in
    # its class; the classes are symmetric, so that is s + Δ3 in sets[3] mod 2π
    a3 = np.array(sets[2])
    a4 = np.array(sets[3])
    shifts = 2 * np.pi * np.arange(-2, 3)
    c = (a4[:, None, 0] + shifts[None, :]).ravel()
    d = (a4[:, None, 1] + shifts[None, :]).ravel()
    xg, wg = np.polynomial.legendre.leggauss(G)
    total = 0.0
    for start in range(0, outer.size, 512):
        s_ = outer[start:start + 512, None, None]
        lo_ = np.maximum(a3[None, :, None, 0], c[None, None, :] - s_)
        hi_ = np.minimum(a3[None, :, None, 1], d[None, None, :] - s_)
        half = np.clip(hi_ - lo_, 0.0, None) / 2
        mid = (hi_ + lo_) / 2
        x3 = mid[..., None] + half[..., None] * xg
        w3 = half[..., None] * wg
        inner = np.sum(w3 * f(x3) * f(s_[..., None] + x3), axis=(1, 2, 3))
        total += float(np.dot(wout[start:start + 512], inner))
    value = 2 * np.pi * total
    diag = None if value > 0 else "constraint set has measure zero"
    return ConstrainedZ(float(value), pattern, G, diag)
