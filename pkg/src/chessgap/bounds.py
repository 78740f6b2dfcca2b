"""Closed-form bounds and the combinatorial constructions behind the gap argument.

Three groups live here: analytic bound evaluators (Potts bad-event bound,
energy constants and nonlinear-ferromagnet bounds), exhaustive enumeration
of separating sets on small block grids, and block labelings with the
events B_N, E_N and C_N that relate block densities to disconnected pairs.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import ndimage, optimize


class BoundsError(ValueError):
    """Raised when a bound is evaluated outside its hypotheses."""


@dataclass
class BoundReport:
    """An evaluated bound with its parameters and precondition flags."""

    name: str
    params: dict
    value: float
    valid: bool = True
    flags: dict = field(default_factory=dict)
    label: str = ""

    def to_dict(self):
        return {
            "name": self.name,
            "params": dict(self.params),
            "value": self.value,
            "valid": self.valid,
            "flags": dict(self.flags),
            "label": self.label,
        }


# ------------------------------------------------------------------ Potts


def potts_bad_bound(q: float, d: int) -> float:
    """Upper bound on p_β(B) for the q-state Potts model, uniform in β.

    [q^(d - 2^-(d-1)) / (q - 2d)^d]^(1/(2d)), evaluated in logs so huge q stay finite.
    """
    if d < 1:
        raise BoundsError(f"dimension must be >= 1, got {d}")
    if not q > 2 * d:
        raise BoundsError(f"hypothesis q > 2d violated: q={q}, 2d={2 * d}")
    log_v = ((d - 2.0 ** -(d - 1)) * math.log(q) - d * math.log(q - 2 * d)) / (2 * d)
    return math.exp(log_v)


def potts_bound_report(q: float, d: int) -> BoundReport:
    params = {"q": q, "d": d}
    try:
        return BoundReport("potts_bad", params, potts_bad_bound(q, d), True, {"q>2d": True}, "Potts bad event")
    except BoundsError as exc:
        return BoundReport("potts_bad", params, math.nan, False, {"q>2d": False, "error": str(exc)}, "Potts bad event")


# ------------------------------------------------------- energy constants


def _log_ratio(x):
    # (1 + cos x)/2 = cos²(x/2); log1p keeps the ratio accurate near 0
    x = np.asarray(x, dtype=float)
    return -np.log1p(-np.sin(x / 2.0) ** 2) / x**2


def enerbd_constants() -> tuple[float, float]:
    """Constants 0 < a < b with exp(-b x²) <= (1 + cos x)/2 <= exp(-a x²) on [-1, 1].

    a = 1/4 is the x -> 0 limit of -ln((1 + cos x)/2)/x²; b is the maximum of
    that ratio over (0, 1], found numerically and never below the value at x = 1.
    """
    res = optimize.minimize_scalar(lambda x: -float(_log_ratio(x)), bounds=(1e-3, 1.0), method="bounded",
                                   options={"xatol": 1e-10})
    b = max(-float(res.fun), float(_log_ratio(1.0)))
    return 0.25, b


def enerbd_check(a: float, b: float, n: int = 10**4) -> dict:
    """Largest violation of the two-sided bound on an n-point grid of [-1, 1]."""
    x = np.linspace(-1.0, 1.0, n)
    mid = (1.0 + np.cos(x)) / 2.0
    lower = np.exp(-b * x**2)
    upper = np.exp(-a * x**2)
    lo_v = float(np.max(lower - mid))
    up_v = float(np.max(mid - upper))
    inner = (x != 0) & (np.abs(x) < 1)
    ratio = _log_ratio(x[inner])
    strict = bool(np.all(a < ratio) and np.all(ratio < b))
    return {
        "a": a,
        "b": b,
        "n": n,
        "lower_violation": max(lo_v, 0.0),
        "upper_violation": max(up_v, 0.0),
        "max_violation": max(lo_v, up_v, 0.0),
        "strict_interior": strict,
    }


# ------------------------------------------------- nonlinear ferromagnet


def _default_ab(a, b):
    if a is None or b is None:
        a0, b0 = enerbd_constants()
        a = a0 if a is None else a
        b = b0 if b is None else b
    return a, b


def _check_nlvm(beta, C, p, kappa, kappa_max_inclusive=False):
    if p <= 0:
        raise BoundsError(f"p must be positive, got {p}")
    if C <= 0:
        raise BoundsError(f"C must be positive, got {C}")
    if C > math.sqrt(p):
        raise BoundsError(f"hypothesis C <= sqrt(p) violated: C={C}, sqrt(p)={math.sqrt(p):.6g}")
    if beta < 0:
        raise BoundsError(f"hypothesis beta >= 0 violated: beta={beta}")
    ok = 0 < kappa <= 1 if kappa_max_inclusive else 0 < kappa < 1
    if not ok:
        rng = "(0, 1]" if kappa_max_inclusive else "(0, 1)"
        raise BoundsError(f"hypothesis kappa in {rng} violated: kappa={kappa}")


def _exp(x):
    return math.exp(x) if x < 700 else math.inf


@dataclass
class NLVMBounds:
    pwo: float
    pmix: float
    gdis: float
    gso: float
    branches: dict
    params: dict

    def reports(self) -> list[BoundReport]:
        labels = {
            "pwo": "weakly ordered bad event",
            "pmix": "mixed strong/disordered bad event",
            "gdis": "disordered good event",
            "gso": "strongly ordered good event",
        }
        return [
            BoundReport(k, dict(self.params), getattr(self, k), True, {"branches": self.branches.get(k)}, labels[k])
            for k in labels
        ]


def nlvm_bounds(beta: float, C: float, p: float, kappa: float, a: float | None = None,
                b: float | None = None) -> NLVMBounds:
    """Bounds on p_β of the bad events B_wo, B_mix and the goods G_dis, G_so."""
    _check_nlvm(beta, C, p, kappa)
    a, b = _default_ab(a, b)
    sp = math.sqrt(p)
    wo1 = C**2 / kappa * _exp(-2 * beta * (math.exp(-b * kappa**2 / C**2) - math.exp(-a / C**2)))
    wo2 = C / (math.pi * sp) * _exp(2 * beta * math.exp(-a / C**2))
    mix1 = _exp(-2 * beta * (1.5 * math.exp(-b / C**2) - 1 - math.exp(-a * C**2)))
    mix2 = _exp(2 * beta) * (1 / (math.pi * C * sp)) ** 0.75
    pwo = 4 * min(wo1, wo2) ** 0.25
    pmix = 4 * min(mix1, mix2) ** 0.5
    gdis = math.pi * C * sp * _exp(-2 * beta * (math.exp(-b / C**2) - math.exp(-a * C**2)))
    gso = _exp(2 * beta) / (math.pi * C * sp)
    return NLVMBounds(
        pwo, pmix, gdis, gso,
        {"pwo": (wo1, wo2), "pmix": (mix1, mix2)},
        {"beta": beta, "C": C, "p": p, "kappa": kappa, "a": a, "b": b},
    )


def nlvm_sup_bad(C: float, p: float, kappa: float, betas, a=None, b=None) -> float:
    """max over the β grid of the bound on p_β(B_wo) + p_β(B_mix)."""
    vals = [nlvm_bounds(be, C, p, kappa, a, b) for be in betas]
    return max(v.pwo + v.pmix for v in vals)


def partition_bound_values(L: int, beta: float, C: float, p: float, kappa: float, a: float | None = None,
                           b: float | None = None, d: int = 2) -> dict:
    """Bounds on the constrained partition functions of the nonlinear ferromagnet.

    Keys ``dis_lower``, ``dis_upper``, ``so_lower``, ``so_upper``, ``wo_upper`` and
    ``mix_upper``. T = L^d is the number of sites and κ may equal 1 here.
    """
    _check_nlvm(beta, C, p, kappa, kappa_max_inclusive=True)
    a, b = _default_ab(a, b)
    T = L**d
    s = C * math.sqrt(p)
    two_pi = 2 * math.pi
    log = {
        "dis_lower": T * math.log(two_pi),
        "dis_upper": T * math.log(two_pi) + 2 * beta * math.exp(-a * C**2) * T,
        "so_lower": T * (2 * beta * math.exp(-b * kappa**2 / C**2) + math.log(2 * kappa / s)),
        "so_upper": math.log(two_pi) + 2 * beta * T + (T - 1) * math.log(2 / s),
        "wo_upper": math.log(two_pi) + T * (2 * beta * math.exp(-a / C**2) + math.log(2 * C / math.sqrt(p))),
        "mix_upper": math.log(two_pi) + beta * (1 + math.exp(-a * C**2)) * T + T / 4 * math.log(two_pi)
        + (0.75 * T - 1) * math.log(2 / s),
    }
    return {k: _exp(v) for k, v in log.items()}


# ----------------------------------------------------- separating sets


def _grid(N: int, d: int, budget: int):
    n = N**d
    if n > budget:
        raise BoundsError(f"grid with {n} sites exceeds the enumeration budget of {budget}")
    coords = np.array([tuple(reversed(u)) for u in itertools.product(range(N), repeat=d)], dtype=np.int64)
    strides = N ** np.arange(d)
    nbrs = []
    for c in coords:
        row = []
        for i in range(d):
            for s in (-1, 1):
                v = c.copy()
                v[i] += s
                if 0 <= v[i] < N:
                    row.append(int(v @ strides))
        nbrs.append(row)
    return coords, strides, nbrs


def _site(x, N, d):
    x = tuple(int(v) for v in x)
    if len(x) != d or any(v < 0 or v >= N for v in x):
        raise BoundsError(f"{x} is not a point of the {N}^{d} block grid")
    return sum(v * N**i for i, v in enumerate(x))


@lru_cache(maxsize=None)
def _connected_sets(N: int, d: int, budget: int) -> tuple[int, ...]:
    """Bitmasks of all nonempty connected subsets of the N^d grid."""
    _, _, nbrs = _grid(N, d, budget)
    n = N**d
    nmask = [sum(1 << j for j in nbrs[i]) for i in range(n)]
    seen = set()
    frontier = [1 << i for i in range(n)]
    seen.update(frontier)
    while frontier:
        nxt = []
        for m in frontier:
            bound = 0
            mm = m
            while mm:
                low = mm & -mm
                bound |= nmask[low.bit_length() - 1]
                mm ^= low
            bound &= ~m
            while bound:
                low = bound & -bound
                bound ^= low
                g = m | low
                if g not in seen:
                    seen.add(g)
                    nxt.append(g)
        frontier = nxt
    return tuple(sorted(seen))


@lru_cache(maxsize=None)
def _separator_counts(N: int, d: int, budget: int) -> np.ndarray:
    """counts[k, x, y] = number of connected size-k sets separating x from y."""
    n = N**d
    shape = (N,) * d
    struct = ndimage.generate_binary_structure(d, 1)
    counts = np.zeros((n + 1, n, n), dtype=np.int64)
    for m in _connected_sets(N, d, budget):
        inside = np.array([(m >> i) & 1 for i in range(n)], dtype=bool)
        free = ~inside
        lab, _ = ndimage.label(free.reshape(shape, order="F"), structure=struct)
        lab = lab.reshape(-1, order="F")
        sep = (lab[:, None] != lab[None, :]) | inside[:, None] | inside[None, :]
        counts[int(inside.sum())] += sep
    return counts


def separating_sets(x, y, N: int, d: int, budget: int = 20) -> list[frozenset]:
    """All connected Γ in the N^d block grid meeting every nearest-neighbour path from x to y.

    Sets are returned as frozensets of coordinate tuples. Paths include their
    endpoints, so any connected set containing x or y separates.
    """
    coords, _, nbrs = _grid(N, d, budget)
    ix, iy = _site(x, N, d), _site(y, N, d)
    if ix == iy:
        raise BoundsError("x and y must differ")
    n = N**d
    out = []
    for m in _connected_sets(N, d, budget):
        if _separates(m, ix, iy, nbrs):
            out.append(frozenset(tuple(int(v) for v in coords[i]) for i in range(n) if (m >> i) & 1))
    return out


def _separates(mask: int, ix: int, iy: int, nbrs) -> bool:
    if (mask >> ix) & 1 or (mask >> iy) & 1:
        return True
    seen = {ix}
    stack = [ix]
    while stack:
        u = stack.pop()
        for v in nbrs[u]:
            if v == iy:
                return False
            if v not in seen and not (mask >> v) & 1:
                seen.add(v)
                stack.append(v)
    return True


def _polynomial(counts_xy: np.ndarray, pval, exclude_endpoints: bool) -> float:
    c = counts_xy.astype(float).copy()
    if exclude_endpoints:
        c[1] -= 2
    k = np.arange(c.size)
    return float(np.sum(c * float(pval) ** k))


def contour_sum(x, y, N: int, d: int, pval: float, exclude_endpoints: bool = False, budget: int = 20) -> float:
    """Σ over separating sets Γ of pval^|Γ|.

    With ``exclude_endpoints`` the singletons {x} and {y} are left out.
    """
    if not 0 < pval < 1:
        raise BoundsError(f"pval must lie in (0, 1), got {pval}")
    ix, iy = _site(x, N, d), _site(y, N, d)
    if ix == iy:
        raise BoundsError("x and y must differ")
    counts = _separator_counts(N, d, budget)
    return _polynomial(counts[:, ix, iy], pval, exclude_endpoints)


DEFAULT_PVALS = (0.01, 0.02, 0.05, 0.1, 0.2)


def c1_fit(d: int, exclude_endpoints: bool = False, pvals=DEFAULT_PVALS, sizes=None, budget: int = 20) -> float:
    """Largest contour_sum / pval^d over all enumerable grids, point pairs and pvals.

    An empirical lower estimate of a constant valid at these sizes only.
    """
    if sizes is None:
        sizes = [N for N in range(2, 10) if N**d <= budget]
    best = 0.0
    for N in sizes:
        counts = _separator_counts(N, d, budget).astype(float)
        n = N**d
        off = ~np.eye(n, dtype=bool)
        for p in pvals:
            k = np.arange(counts.shape[0], dtype=float)
            tot = np.tensordot(float(p) ** k, counts, axes=(0, 0))
            if exclude_endpoints:
                tot = tot - 2 * p
            best = max(best, float(np.max(tot[off])) / p**d)
    return best


def delta_for_epsilon(eps: float, d: int, c1: float) -> float:
    """δ(ε) = (ε² / (4 c1))^(1/d): the bad-event level that makes c1 δ^d ε^-2 equal 1/4."""
    if not 0 < eps < 0.5:
        raise BoundsError(f"eps must lie in (0, 1/2), got {eps}")
    if c1 <= 0:
        raise BoundsError(f"c1 must be positive, got {c1}")
    return (eps**2 / (4 * c1)) ** (1.0 / d)


def potts_q_threshold(eps: float = 0.45, d: int = 2, c1: float | None = None, q_max: float = 1e300) -> dict:
    """Smallest q (to relative precision 1e-9) with potts_bad_bound(q, d) < δ(ε).

    The bound decreases in q, so the condition then holds for every larger q.
    """
    if c1 is None:
        c1 = c1_fit(d)
    delta = delta_for_epsilon(eps, d, c1)
    lo = math.log(2 * d + 1e-9)
    hi = math.log(q_max)
    if potts_bad_bound(math.exp(hi), d) >= delta:
        return {"eps": eps, "d": d, "c1": c1, "delta": delta, "q_star": math.inf}
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if potts_bad_bound(math.exp(mid), d) < delta:
            hi = mid
        else:
            lo = mid
        if hi - lo < 1e-9:
            break
    return {"eps": eps, "d": d, "c1": c1, "delta": delta, "q_star": math.exp(hi)}


# ------------------------------------------------------- block labelings


@dataclass
class BlockLabeling:
    """Which block event holds on each point of an N^d block grid.

    Label 0 is the bad event and labels 1..r are the good events.
    """

    N: int
    d: int
    r: int
    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels, dtype=np.int64)
        if lab.size == self.N**self.d and lab.shape != (self.N,) * self.d:
            lab = lab.reshape((self.N,) * self.d, order="F")
        if lab.shape != (self.N,) * self.d:
            raise BoundsError(f"labels have shape {lab.shape}, expected {(self.N,) * self.d}")
        if lab.size and (lab.min() < 0 or lab.max() > self.r):
            raise BoundsError(f"labels must lie in 0..{self.r}")
        self.labels = lab

    @property
    def n(self) -> int:
        return self.N**self.d

    def densities(self) -> np.ndarray:
        """Fractions of blocks with label 0 (bad), 1, ..., r."""
        return np.bincount(self.labels.ravel(), minlength=self.r + 1) / self.n


def _cross(d):
    return ndimage.generate_binary_structure(d, 1)


def y_n_count(lab: BlockLabeling) -> int:
    """Ordered pairs x != y not joined by a nearest-neighbour path of good blocks."""
    good = lab.labels > 0
    clusters, k = ndimage.label(good, structure=_cross(lab.d))
    sizes = np.bincount(clusters.ravel(), minlength=k + 1)[1:]
    n = lab.n
    return int(n * (n - 1) - np.sum(sizes * (sizes - 1)))


def c_n_holds(lab: BlockLabeling, eps: float) -> bool:
    return y_n_count(lab) >= (eps * lab.n) ** 2


def e_n_holds(lab: BlockLabeling, eps: float) -> bool:
    """Bad density above ε, or two distinct goods both above ε."""
    rho = lab.densities()
    if rho[0] > eps:
        return True
    return int(np.sum(rho[1:] > eps)) >= 2


def realizable(lab: BlockLabeling) -> bool:
    """No two neighbouring blocks carry different good labels."""
    x = lab.labels
    for i in range(lab.d):
        a = np.take(x, range(0, lab.N - 1), axis=i)
        b = np.take(x, range(1, lab.N), axis=i)
        if np.any((a > 0) & (b > 0) & (a != b)):
            return False
    return True


@dataclass
class InclusionReport:
    N: int
    d: int
    r: int
    eps: float
    filtered: bool
    checked: int
    e_n_count: int
    passed: bool
    counterexample: np.ndarray | None = None

    def to_dict(self):
        out = dict(self.__dict__)
        out["counterexample"] = None if self.counterexample is None else self.counterexample.tolist()
        return out


def lemma_incl_bruteforce(N: int, d: int, r: int, eps: float, filtered: bool = True,
                          budget: int = 10**6) -> InclusionReport:
    """Check that E_N implies C_N on every labeling of the N^d grid.

    With ``filtered`` only labelings where neighbouring goods agree are
    checked. The first violating labeling, if any, is returned.
    """
    total = (r + 1) ** (N**d)
    if total > budget:
        raise BoundsError(f"{total} labelings exceed the enumeration budget of {budget}")
    checked = 0
    hits = 0
    for labels in itertools.product(range(r + 1), repeat=N**d):
        lab = BlockLabeling(N, d, r, np.array(labels))
        if filtered and not realizable(lab):
            continue
        checked += 1
        if e_n_holds(lab, eps):
            hits += 1
            if not c_n_holds(lab, eps):
                return InclusionReport(N, d, r, eps, filtered, checked, hits, False, lab.labels)
    return InclusionReport(N, d, r, eps, filtered, checked, hits, True)


def r_mn_fraction(labels, N: int, eps: float, r: int | None = None) -> float:
    """Fraction of the N^d superblocks of an (MN)^d labeling on which E_N holds."""
    labels = np.asarray(labels, dtype=np.int64)
    d = labels.ndim
    if any(s % N for s in labels.shape) or len(set(labels.shape)) != 1:
        raise BoundsError(f"labels of shape {labels.shape} do not split into blocks of side {N}")
    M = labels.shape[0] // N
    if r is None:
        r = int(labels.max()) if labels.size else 0
    hits = 0
    for corner in itertools.product(range(M), repeat=d):
        sl = tuple(slice(c * N, (c + 1) * N) for c in corner)
        if e_n_holds(BlockLabeling(N, d, r, labels[sl]), eps):
            hits += 1
    return hits / M**d
