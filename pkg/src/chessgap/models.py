"""Lattice Hamiltonians on the torus, configurations and pair-interaction sums."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import comb

from .lattice import TorusGeometry


class ModelError(ValueError):
    """Raised for invalid model parameters or incompatible configurations."""


def wrap_angle(a):
    """Reduce angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2 * np.pi)


# ---------------------------------------------------------------- model specs


@dataclass(frozen=True)
class Potts:
    """q-state Potts model, H = -j sum_<xy> delta - j2 sum_{|x-y|=2, axial} delta.

    ``j2`` is a test coupling between axial next-next neighbours; it is zero for
    the physical model and negative values break reflection positivity.
    """

    q: int
    j: float = 1.0
    j2: float = 0.0
    kind = "potts"
    discrete = True

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise ModelError(f"q must be an integer >= 2, got {self.q}")
        _finite(self, "j", "j2")

    @property
    def n_local(self) -> int:
        return self.q


@dataclass(frozen=True)
class DilutedPotts:
    """Site-diluted Potts model with chemical potential ``lam`` and attraction ``kappa``."""

    q: int
    lam: float = 0.0
    kappa: float = 0.0
    kind = "diluted_potts"
    discrete = True

    def __post_init__(self):
        if int(self.q) != self.q or self.q < 2:
            raise ModelError(f"q must be an integer >= 2, got {self.q}")
        _finite(self, "lam", "kappa")

    @property
    def n_local(self) -> int:
        return 2 * self.q


@dataclass(frozen=True)
class DilutedXY:
    """Site-diluted XY model; angles are carried by occupied and empty sites alike."""

    lam: float = 0.0
    kappa: float = 0.0
    kind = "diluted_xy"
    discrete = False

    def __post_init__(self):
        _finite(self, "lam", "kappa")


@dataclass(frozen=True)
class O2AF:
    """O(2) antiferromagnet with unit next-nearest and ``gamma`` nearest couplings (d=2).

    Spins are unit vectors stored by their angle.
    """

    gamma: float = 1.0
    kind = "o2af"
    discrete = False

    def __post_init__(self):
        _finite(self, "gamma")


@dataclass(frozen=True)
class NonlinearFerromagnet:
    """H = -sum_<xy> ((1 + cos(phi_x - phi_y)) / 2)^p."""

    p: float
    kind = "nlvm"
    discrete = False

    def __post_init__(self):
        if not (math.isfinite(self.p) and self.p >= 1):
            raise ModelError(f"p must be >= 1, got {self.p}")


@dataclass(frozen=True)
class Magnetostriction:
    """Ising spins coupled through compressible bond lengths r in (0, r_max].

    J(r) = J1 for r <= eta_J and J2 otherwise. The a priori measure on r is
    Lebesgue on (0, r_max].
    """

    J1: float = 2.0
    J2: float = 0.1
    eta_J: float = 0.8
    kappa: float = 1.0
    lam: float = 0.5
    R: float = 1.0
    r_max: float = 4.0
    kind = "magnetostriction"
    discrete = False

    def __post_init__(self):
        _finite(self, "J1", "J2", "eta_J", "kappa", "lam", "R", "r_max")
        if not 0 < self.R < self.r_max:
            raise ModelError(f"need 0 < R < r_max, got R={self.R}, r_max={self.r_max}")

    def coupling(self, r):
        return np.where(np.asarray(r) <= self.eta_J, self.J1, self.J2)


ModelSpec = Potts | DilutedPotts | DilutedXY | O2AF | NonlinearFerromagnet | Magnetostriction

MODEL_CLASSES = {
    cls.kind: cls for cls in (Potts, DilutedPotts, DilutedXY, O2AF, NonlinearFerromagnet, Magnetostriction)
}


def _finite(obj, *names):
    for n in names:
        v = getattr(obj, n)
        if not math.isfinite(v):
            raise ModelError(f"{n} must be finite, got {v}")


def model_to_dict(m) -> dict:
    return {"kind": m.kind, **asdict(m)}


def model_from_dict(d: dict):
    d = dict(d)
    kind = d.pop("kind", None)
    if kind not in MODEL_CLASSES:
        raise ModelError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_CLASSES)}")
    try:
        return MODEL_CLASSES[kind](**d)
    except TypeError as exc:
        raise ModelError(f"bad parameters for {kind}: {exc}") from None


# ------------------------------------------------------------- configurations


@dataclass(eq=False)
class Configuration:
    """Per-site states plus optional occupations and per-edge lengths.

    ``spins`` holds labels 1..q (Potts), angles in (-pi, pi] (continuous models) or
    signs +-1 (magnetostriction). ``occ`` holds 0/1 occupations for diluted models.
    ``edges[i, x]`` is the length of the bond (x, x + e_i).
    """

    spins: np.ndarray
    occ: np.ndarray | None = None
    edges: np.ndarray | None = None

    def copy(self) -> "Configuration":
        return Configuration(
            self.spins.copy(),
            None if self.occ is None else self.occ.copy(),
            None if self.edges is None else self.edges.copy(),
        )

    def __eq__(self, other):
        if not isinstance(other, Configuration):
            return NotImplemented
        return all(
            (a is None and b is None) or (a is not None and b is not None and np.array_equal(a, b))
            for a, b in ((self.spins, other.spins), (self.occ, other.occ), (self.edges, other.edges))
        )

    def pull(self, perm: np.ndarray, g: TorusGeometry | None = None) -> "Configuration":
        """Configuration x -> c[perm[x]]. Edges need the geometry and a bond-preserving map."""
        edges = None
        if self.edges is not None:
            if g is None:
                raise ModelError("pulling back edge variables needs the geometry")
            edges = pull_edges(self.edges, perm, g)
        return Configuration(
            self.spins[perm], None if self.occ is None else self.occ[perm], edges
        )


def pull_edges(edges: np.ndarray, perm: np.ndarray, g: TorusGeometry) -> np.ndarray:
    """Edge values of the pulled-back configuration for a map sending bonds to bonds."""
    out = np.empty_like(edges)
    nb = g.neighbors
    for i in range(g.d):
        a = perm
        b = perm[nb[2 * i]]
        # the image of bond (x, x+e_i) is {a, b}; find its direction and base point
        for j in range(g.d):
            fwd = nb[2 * j][a] == b
            bwd = nb[2 * j][b] == a
            out[i, fwd] = edges[j, a[fwd]]
            out[i, bwd & ~fwd] = edges[j, b[bwd & ~fwd]]
    return out


def validate_configuration(m, g: TorusGeometry, c: Configuration) -> None:
    n = g.n_sites
    if c.spins.shape != (n,):
        raise ModelError(f"spins must have shape ({n},), got {c.spins.shape}")
    if isinstance(m, (Potts, DilutedPotts)):
        if c.spins.min() < 1 or c.spins.max() > m.q:
            raise ModelError(f"Potts labels must lie in 1..{m.q}")
    if isinstance(m, (DilutedPotts, DilutedXY)):
        if c.occ is None or c.occ.shape != (n,):
            raise ModelError("diluted models need an occupation array of one entry per site")
    if isinstance(m, O2AF) and g.d != 2:
        raise ModelError("O2AF is defined on d=2 tori only")
    if isinstance(m, Magnetostriction):
        if c.edges is None or c.edges.shape != (g.d, n):
            raise ModelError(f"magnetostriction needs edge lengths of shape ({g.d}, {n})")


def constant_configuration(m, g: TorusGeometry, value=None) -> Configuration:
    """A spatially constant configuration; ``value`` is the spin label or angle."""
    n = g.n_sites
    if isinstance(m, (Potts, DilutedPotts)):
        spins = np.full(n, 1 if value is None else int(value), dtype=np.int64)
    elif isinstance(m, Magnetostriction):
        spins = np.full(n, 1 if value is None else int(value), dtype=np.int64)
    else:
        spins = np.full(n, 0.0 if value is None else float(value))
    occ = np.ones(n, dtype=np.int64) if isinstance(m, (DilutedPotts, DilutedXY)) else None
    edges = np.full((g.d, n), m.R) if isinstance(m, Magnetostriction) else None
    return Configuration(spins, occ, edges)


def random_configuration(m, g: TorusGeometry, rng: np.random.Generator) -> Configuration:
    """A draw from the a priori (beta = 0) product measure."""
    n = g.n_sites
    occ = edges = None
    if isinstance(m, (Potts, DilutedPotts)):
        spins = rng.integers(1, m.q + 1, size=n)
    elif isinstance(m, Magnetostriction):
        spins = rng.choice(np.array([-1, 1]), size=n)
        edges = m.r_max * (1.0 - rng.random((g.d, n)))
    else:
        spins = wrap_angle(rng.uniform(-np.pi, np.pi, size=n))
    if isinstance(m, (DilutedPotts, DilutedXY)):
        occ = rng.integers(0, 2, size=n)
    return Configuration(spins.astype(np.int64) if m.discrete or isinstance(m, Magnetostriction) else spins, occ, edges)


# -------------------------------------------------------------------- energies


def torus_energy(m, g: TorusGeometry, c: Configuration) -> float:
    """Exact energy of the periodic configuration, one term per (site, direction)."""
    validate_configuration(m, g, c)
    return float(energy_arrays(m, g, c.spins, c.occ, c.edges))


def energy_arrays(m, g: TorusGeometry, spins, occ=None, edges=None) -> np.ndarray:
    """Torus energies for a batch; the site axis is last (edges: (..., d, n))."""
    nb = g.neighbors
    s = spins
    fwd = [nb[2 * i] for i in range(g.d)]
    if isinstance(m, Potts):
        e = -m.j * sum(np.sum(s == s[..., f], axis=-1) for f in fwd)
        if m.j2:
            e = e - m.j2 * sum(np.sum(s == s[..., g.neighbors2[2 * i]], axis=-1) for i in range(g.d))
        return np.asarray(e, dtype=float)
    if isinstance(m, DilutedPotts):
        n = occ
        e = sum(np.sum(n * n[..., f] * (1.0 - (s == s[..., f]) - m.kappa), axis=-1) for f in fwd)
        return e - m.lam * np.sum(n, axis=-1)
    if isinstance(m, DilutedXY):
        n = occ
        e = sum(np.sum(n * n[..., f] * (1.0 - np.cos(s - s[..., f]) - m.kappa), axis=-1) for f in fwd)
        return e - m.lam * np.sum(n, axis=-1)
    if isinstance(m, O2AF):
        if g.d != 2:
            raise ModelError("O2AF is defined on d=2 tori only")
        dn = g.diagonal_neighbors
        e = np.sum(np.cos(s - s[..., dn[0]]), axis=-1) + np.sum(np.cos(s - s[..., dn[2]]), axis=-1)
        return e + m.gamma * sum(np.sum(np.cos(s - s[..., f]), axis=-1) for f in fwd)
    if isinstance(m, NonlinearFerromagnet):
        return -sum(np.sum(((1.0 + np.cos(s - s[..., f])) / 2.0) ** m.p, axis=-1) for f in fwd)
    if isinstance(m, Magnetostriction):
        r = edges
        e = 0.0
        for i, f in enumerate(fwd):
            ri = r[..., i, :]
            e = e - np.sum(m.coupling(ri) * s * s[..., f], axis=-1)
            e = e + m.kappa * np.sum((ri - m.R) ** 2, axis=-1)
        if m.lam:
            back = [nb[2 * i + 1] for i in range(g.d)]
            for i in range(g.d):
                for j in range(i + 1, g.d):
                    ri, rj = r[..., i, :], r[..., j, :]
                    for a in (ri, ri[..., back[i]]):
                        for b in (rj, rj[..., back[j]]):
                            e = e + m.lam * np.sum((a - b) ** 2, axis=-1)
        return np.asarray(e, dtype=float)
    raise ModelError(f"unsupported model {m!r}")


def energy_density(m, g: TorusGeometry, c: Configuration) -> float:
    return torus_energy(m, g, c) / g.n_sites


def gibbs_weight(m, g: TorusGeometry, beta: float, c: Configuration) -> float:
    """Boltzmann factor exp(-beta H); the a priori measure is left to the caller."""
    if beta < 0:
        raise ModelError("beta must be >= 0")
    if beta == 0:
        return 1.0
    return math.exp(-beta * torus_energy(m, g, c))


def bond_count(m, g: TorusGeometry) -> int:
    """Number of nearest-neighbour bond terms in the torus energy."""
    return g.d * g.n_sites


# ---------------------------------------------------------- pair interactions


@dataclass(frozen=True)
class PairInteraction:
    """Translation-invariant pair coupling J(x - y).

    ``cube``: J = 1 when x and y are distinct vertices of a common unit cube.
    ``yukawa``: J = exp(-mu |x - y|_1).
    ``powerlaw``: J = |x - y|_1^(-kappa).
    """

    kind: str
    mu: float = 1.0
    kappa: float = 4.0
    d: int = 2

    def __post_init__(self):
        if self.kind not in ("cube", "yukawa", "powerlaw"):
            raise ModelError(f"unknown interaction kind {self.kind!r}")
        if self.kind == "yukawa" and not self.mu > 0:
            raise ModelError("yukawa needs mu > 0")
        if self.kind == "powerlaw" and not self.kappa > 0:
            raise ModelError("powerlaw needs kappa > 0")
        if self.d < 1:
            raise ModelError("d must be >= 1")

    @property
    def finite_range(self) -> bool:
        return self.kind == "cube"

    def coupling(self, v: np.ndarray) -> np.ndarray:
        """J at displacement(s) ``v`` (last axis is the coordinate); J(0) = 0."""
        v = np.abs(np.asarray(v, dtype=np.int64))
        n = v.sum(axis=-1)
        if self.kind == "cube":
            return ((v.max(axis=-1) <= 1) & (n > 0)).astype(float)
        nf = np.where(n > 0, n, 1).astype(float)
        val = np.exp(-self.mu * nf) if self.kind == "yukawa" else nf ** (-self.kappa)
        return np.where(n > 0, val, 0.0)

    def shell(self, n: np.ndarray) -> np.ndarray:
        """J on the l1 shell of radius n (only for the radial kinds)."""
        n = np.asarray(n, dtype=float)
        return np.exp(-self.mu * n) if self.kind == "yukawa" else n ** (-self.kappa)


@dataclass(frozen=True)
class InteractionSum:
    """A partial sum with a rigorous upper bound on the neglected tail."""

    value: float
    tail_bound: float
    cutoff: int
    divergent: bool = False

    def __float__(self):
        return float(self.value)

    @property
    def upper(self) -> float:
        return self.value + self.tail_bound


def shell_size(n, d: int) -> np.ndarray:
    """Number of points of Z^d at l1 distance exactly n >= 1."""
    n = np.asarray(n, dtype=np.int64)
    out = np.zeros(n.shape, dtype=float)
    for k in range(1, d + 1):
        out += 2.0**k * comb(d, k, exact=True) * comb(n - 1, k - 1)
    return out


def _shell_majorant(n, d):
    # 2^d (n+d-1)^(d-1) / (d-1)! bounds the shell size from above
    return 2.0**d * (n + d - 1.0) ** (d - 1) / math.factorial(d - 1)


def _tail(pi: PairInteraction, R: int) -> tuple[float, bool]:
    d = pi.d
    if pi.kind == "yukawa":
        # majorant terms have ratio ((n+1+d)/(n+d))^(d-1) e^-mu, decreasing in n;
        # sum explicitly until the ratio drops below 1, then close with a geometric series
        if d > 1:
            m0 = max(R, int(math.ceil(1.0 / math.expm1(pi.mu / (d - 1)))) - d + 1)
        else:
            m0 = R
        n = np.arange(R + 1, m0 + 1, dtype=float)
        head = float(np.sum(_shell_majorant(n, d) * np.exp(-pi.mu * n)))
        ratio = ((m0 + 1.0 + d) / (m0 + d)) ** (d - 1) * math.exp(-pi.mu)
        first = _shell_majorant(m0 + 1, d) * math.exp(-pi.mu * (m0 + 1))
        return head + first / (1 - ratio), False
    s = pi.kappa - d + 1
    if s <= 1:
        return math.inf, True
    # shell(n) J(n) <= 2^d d^(d-1)/(d-1)! n^(-s) and sum_{n>R} n^-s <= R^(1-s)/(s-1)
    const = 2.0**d * d ** (d - 1) / math.factorial(d - 1)
    return const * R ** (1 - s) / (s - 1), False


def interaction_norm(pi: PairInteraction, tail_cutoff: int = 10000) -> InteractionSum:
    """sum_{v != 0} |J(v)| as a partial sum over |v|_1 <= cutoff plus a tail bound."""
    if tail_cutoff < 1:
        raise ModelError("cutoff must be >= 1")
    d = pi.d
    if pi.kind == "cube":
        return InteractionSum(float(3**d - 1), 0.0, 1)
    if pi.kind == "powerlaw" and pi.kappa <= d:
        return InteractionSum(math.inf, math.inf, tail_cutoff, divergent=True)
    n = np.arange(1, tail_cutoff + 1)
    partial = float(np.sum(shell_size(n, d) * pi.shell(n)))
    tail, div = _tail(pi, tail_cutoff)
    return InteractionSum(partial, tail, tail_cutoff, div)


def boundary_interaction_sum(pi: PairInteraction, L: int, tail_cutoff: int | None = None) -> InteractionSum:
    """sum over pairs x in the box [0, L)^d, y outside it, of |J(x - y)|.

    Each displacement v contributes |J(v)| (L^d - prod_i (L - |v_i|)_+). Displacements
    with some |v_i| >= L are fully counted through the norm, whose tail is bounded.
    """
    if L < 1:
        raise ModelError("L must be >= 1")
    d = pi.d
    if tail_cutoff is None:
        tail_cutoff = max(10000, 4 * d * L)
    norm = interaction_norm(pi, max(tail_cutoff, d * (L - 1)))
    if norm.divergent:
        return norm
    rng = np.arange(-(L - 1), L)
    grids = np.meshgrid(*([rng] * d), indexing="ij")
    v = np.stack([g_.ravel() for g_ in grids], axis=-1)
    inside = np.prod(L - np.abs(v), axis=-1).astype(float)
    interior = float(np.sum(pi.coupling(v) * inside))
    vol = float(L) ** d
    return InteractionSum(vol * norm.value - interior, vol * norm.tail_bound, norm.cutoff)


__all__ = [
    "ModelError",
    "Potts",
    "DilutedPotts",
    "DilutedXY",
    "O2AF",
    "NonlinearFerromagnet",
    "Magnetostriction",
    "ModelSpec",
    "Configuration",
    "PairInteraction",
    "InteractionSum",
    "torus_energy",
    "energy_density",
    "energy_arrays",
    "gibbs_weight",
    "interaction_norm",
    "boundary_interaction_sum",
    "constant_configuration",
    "random_configuration",
    "model_from_dict",
    "model_to_dict",
    "wrap_angle",
]
