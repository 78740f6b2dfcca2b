"""Metropolis sampling of torus measures and the dual-start gap scan.

Each chain draws its random numbers from its own PCG64 stream, spawned from
the master seed with the key (β index, start index), so a scan is
reproducible bit for bit regardless of how chains are scheduled.
"""

from __future__ import annotations

import csv
import math
import multiprocessing
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import kernels as K
from .events import (
    GoodFamily,
    diluted_events,
    magnetostriction_events,
    nlvm_events,
    o2af_events,
    potts_events,
    view_of_arrays,
)
from .lattice import TorusGeometry
from .models import (
    Configuration,
    DilutedPotts,
    DilutedXY,
    Magnetostriction,
    ModelError,
    NonlinearFerromagnet,
    O2AF,
    Potts,
    constant_configuration,
    energy_arrays,
    random_configuration,
    wrap_angle,
)

TARGET_ACCEPTANCE = 0.45
TUNE_EVERY = 50
NONCONVERGENCE_SIGMAS = 5.0


@dataclass(frozen=True)
class Schedule:
    burn_in: int = 10_000
    sweeps: int = 100_000
    batches: int = 20
    measure_every: int = 1

    def __post_init__(self):
        if self.burn_in < 0 or self.sweeps < 1 or self.measure_every < 1:
            raise ValueError("burn_in >= 0, sweeps >= 1 and measure_every >= 1 are required")
        if self.batches < 2 or self.sweeps // self.measure_every < self.batches:
            raise ValueError("need at least two batches and one measurement per batch")

    def to_dict(self):
        return dict(self.__dict__)


@dataclass(eq=False)
class ChainState:
    """A Markov chain: configuration, random stream and running counters."""

    config: Configuration
    rng: np.random.Generator
    seed: tuple = ()
    sweeps: int = 0
    energy: float = 0.0
    widths: dict = field(default_factory=dict)
    accepted: dict = field(default_factory=dict)
    proposed: dict = field(default_factory=dict)

    def acceptance(self, key: str | None = None) -> float:
        keys = [key] if key else list(self.proposed)
        tot = sum(self.proposed.get(k, 0) for k in keys)
        return sum(self.accepted.get(k, 0) for k in keys) / tot if tot else math.nan


def chain_rng(master_seed: int, key=()) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


# ---------------------------------------------------------------- starts


def start_names(m) -> tuple[str, ...]:
    if isinstance(m, O2AF):
        return ("stripes_h", "stripes_v")
    return ("ordered", "disordered")


def initial_configuration(m, g: TorusGeometry, start: str, rng: np.random.Generator) -> Configuration:
    """Ordered (constant), disordered (a priori draw) or stripe starting configurations."""
    if start == "ordered":
        return constant_configuration(m, g)
    if start == "disordered":
        return random_configuration(m, g, rng)
    if start in ("stripes_h", "stripes_v"):
        if not isinstance(m, O2AF):
            raise ModelError("stripe starts are defined for the O2AF model")
        axis = 1 if start == "stripes_h" else 0
        return Configuration(wrap_angle(np.pi * (g.coords[:, axis] % 2).astype(float)))
    raise ModelError(f"unknown start {start!r}")


def new_chain(m, g: TorusGeometry, start: str, seed: int = 0, key=()) -> ChainState:
    rng = chain_rng(seed, key)
    c = initial_configuration(m, g, start, rng)
    c = _contiguous(m, c)
    st = ChainState(c, rng, (int(seed),) + tuple(key))
    if isinstance(m, (DilutedXY, O2AF, NonlinearFerromagnet)):
        st.widths["angle"] = 1.0
    if isinstance(m, Magnetostriction):
        st.widths["edge"] = 0.5
    st.energy = _energy(m, g, c)
    return st


def _contiguous(m, c: Configuration) -> Configuration:
    discrete = isinstance(m, (Potts, DilutedPotts, Magnetostriction))
    spins = np.ascontiguousarray(c.spins, dtype=np.int64 if discrete else np.float64)
    occ = None if c.occ is None else np.ascontiguousarray(c.occ, dtype=np.int64)
    edges = None if c.edges is None else np.ascontiguousarray(c.edges, dtype=np.float64)
    return Configuration(spins, occ, edges)


def _energy(m, g, c: Configuration) -> float:
    return float(energy_arrays(m, g, c.spins, c.occ, c.edges))


# ---------------------------------------------------------------- sweeps


@lru_cache(maxsize=32)
def _tables(g: TorusGeometry):
    dn = g.diagonal_neighbors if g.d == 2 else np.zeros((0, g.n_sites), dtype=np.int64)
    return K.as_index(g.neighbors), K.as_index(g.neighbors2), K.as_index(dn)


def _count(state: ChainState, key: str, acc: int, n: int):
    state.accepted[key] = state.accepted.get(key, 0) + int(acc)
    state.proposed[key] = state.proposed.get(key, 0) + int(n)


def sweep(m, g: TorusGeometry, beta: float, state: ChainState) -> ChainState:
    """One full lattice sweep of single-variable Metropolis updates."""
    if beta < 0:
        raise ModelError("beta must be >= 0")
    nbr, nbr2, dnbr = _tables(g)
    rng = state.rng
    c = state.config
    n = g.n_sites
    beta = float(beta)
    if isinstance(m, Potts):
        props = rng.integers(1, m.q + 1, size=n)
        us = rng.random(n)
        acc, de = K.potts_sweep(c.spins, nbr, nbr2, float(m.j), float(m.j2), beta, props, us)
        _count(state, "site", acc, n)
    elif isinstance(m, DilutedPotts):
        props = rng.integers(0, 2 * m.q, size=n)
        us = rng.random(n)
        acc, de = K.diluted_potts_sweep(c.spins, c.occ, nbr, m.q, float(m.kappa), float(m.lam), beta, props, us)
        _count(state, "site", acc, n)
    elif isinstance(m, DilutedXY):
        occ_props = rng.integers(0, 2, size=n)
        shifts = rng.uniform(-1.0, 1.0, size=n)
        us = rng.random(n)
        acc, de = K.diluted_xy_sweep(c.spins, c.occ, nbr, float(m.kappa), float(m.lam), beta,
                                     state.widths["angle"], occ_props, shifts, us)
        _count(state, "angle", acc, n)
    elif isinstance(m, O2AF):
        shifts = rng.uniform(-1.0, 1.0, size=n)
        us = rng.random(n)
        acc, de = K.o2af_sweep(c.spins, nbr, dnbr, float(m.gamma), beta, state.widths["angle"], shifts, us)
        _count(state, "angle", acc, n)
    elif isinstance(m, NonlinearFerromagnet):
        shifts = rng.uniform(-1.0, 1.0, size=n)
        us = rng.random(n)
        acc, de = K.nlvm_sweep(c.spins, nbr, float(m.p), beta, state.widths["angle"], shifts, us)
        _count(state, "angle", acc, n)
    elif isinstance(m, Magnetostriction):
        r = c.edges.reshape(-1)
        us = rng.random(n)
        acc, de = K.ms_spin_sweep(c.spins, r, nbr, float(m.J1), float(m.J2), float(m.eta_J), beta, us)
        _count(state, "site", acc, n)
        ne = r.size
        shifts = rng.uniform(-1.0, 1.0, size=ne)
        us = rng.random(ne)
        acc2, de2 = K.ms_edge_sweep(c.spins, r, nbr, float(m.J1), float(m.J2), float(m.eta_J), float(m.kappa),
                                    float(m.lam), float(m.R), float(m.r_max), beta, state.widths["edge"],
                                    shifts, us)
        _count(state, "edge", acc2, ne)
        de += de2
    else:
        raise ModelError(f"unsupported model {m!r}")
    state.energy += de
    state.sweeps += 1
    return state


def _tune(m, state: ChainState, window: dict):
    """Scale proposal windows toward the target acceptance (burn-in only)."""
    for key, wkey, cap in (("angle", "angle", math.pi), ("edge", "edge", getattr(m, "r_max", 1.0))):
        if wkey not in state.widths:
            continue
        acc = state.accepted.get(key, 0) - window.get(key, (0, 0))[0]
        tot = state.proposed.get(key, 0) - window.get(key, (0, 0))[1]
        if tot:
            ratio = min(max((acc / tot) / TARGET_ACCEPTANCE, 0.5), 2.0)
            state.widths[wkey] = min(max(state.widths[wkey] * ratio, 1e-3), cap)
    for key in state.proposed:
        window[key] = (state.accepted[key], state.proposed[key])


# ----------------------------------------------------------- estimators


@dataclass
class ScanRow:
    beta: float
    start: str
    energy_mean: float
    energy_err: float
    rho: dict
    rho_err: dict
    rho_bad: float
    rho_bad_err: float
    n_samples: int
    acceptance: float
    flags: list = field(default_factory=list)
    final_energy: float = math.nan

    @property
    def converged(self) -> bool:
        return not any(f.startswith("nonconverged") for f in self.flags)

    def max_good(self) -> tuple[str, float]:
        name = max(self.rho, key=lambda k: self.rho[k])
        return name, self.rho[name]


@dataclass
class ScanCurve:
    """Rows of per-(β, start) estimates; event names fix the column order."""

    events: list
    rows: list = field(default_factory=list)
    model: str = ""

    @property
    def betas(self) -> list[float]:
        return sorted({r.beta for r in self.rows})

    def branch(self, start: str) -> list[ScanRow]:
        return sorted((r for r in self.rows if r.start == start), key=lambda r: r.beta)

    def starts(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.start not in seen:
                seen.append(r.start)
        return seen

    def columns(self) -> list[str]:
        cols = ["beta", "start", "energy_mean", "energy_err"]
        for e in self.events:
            cols += [f"rho_{e}", f"rho_{e}_err"]
        return cols + ["rho_bad", "rho_bad_err", "n_samples", "acceptance", "flags"]

    def write_csv(self, path, config_hash: str = "", seed: int | None = None):
        with open(path, "w", newline="") as fh:
            fh.write(f"# config_hash={config_hash} seed={seed}\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(self.columns())
            for r in self.rows:
                row = [_fmt(r.beta), r.start, _fmt(r.energy_mean), _fmt(r.energy_err)]
                for e in self.events:
                    row += [_fmt(r.rho[e]), _fmt(r.rho_err[e])]
                row += [_fmt(r.rho_bad), _fmt(r.rho_bad_err), r.n_samples, _fmt(r.acceptance), ";".join(r.flags)]
                w.writerow(row)


def _fmt(v) -> str:
    return f"{float(v):.12g}"


def _batch_stats(batch_sums: np.ndarray, batch_n: np.ndarray):
    """Mean, batch-means standard error and a half-versus-half convergence test."""
    means = batch_sums / batch_n[:, None]
    k = means.shape[0]
    mean = batch_sums.sum(axis=0) / batch_n.sum()
    err = means.std(axis=0, ddof=1) / math.sqrt(k)
    h = k // 2
    m1, m2 = means[:h].mean(axis=0), means[h:].mean(axis=0)
    s1 = means[:h].std(axis=0, ddof=1) / math.sqrt(h) if h > 1 else np.zeros_like(m1)
    s2 = means[h:].std(axis=0, ddof=1) / math.sqrt(k - h) if k - h > 1 else np.zeros_like(m2)
    spread = np.sqrt(s1**2 + s2**2)
    bad = np.abs(m1 - m2) > NONCONVERGENCE_SIGMAS * np.where(spread > 0, spread, np.inf)
    bad |= (spread == 0) & (m1 != m2)
    return mean, err, bad


def _classifier(m, g: TorusGeometry, family: GoodFamily):
    """Per-configuration class counts (goods 0..r-1, bad r)."""
    r = family.r
    if isinstance(m, Potts) and family.name == "potts" and family.B == g.B and family.params.get("q") == m.q:
        blocks = K.as_index(g.block_table)
        bonds = K.as_index(g.local_bonds[:, :2])

        def counts(c):
            out = np.zeros(r + 1, dtype=np.int64)
            K.potts_block_counts(c.spins, blocks, bonds, m.q, out)
            out[r] = blocks.shape[0] - out[:r].sum()
            return out

        return counts
    if family.B != g.B:
        raise ModelError(f"family block scale {family.B} differs from the geometry block scale {g.B}")

    def counts(c):
        lab = family.classify(view_of_arrays(g, c.spins, c.occ, c.edges))
        return np.bincount(lab.ravel(), minlength=r + 1)

    return counts


def run_chain(m, g: TorusGeometry, beta: float, family: GoodFamily, schedule: Schedule, start: str,
              seed: int = 0, key=()) -> ScanRow:
    """Burn in, then measure energy density and block-event densities with batch means."""
    st = new_chain(m, g, start, seed, key)
    window: dict = {}
    for i in range(schedule.burn_in):
        sweep(m, g, beta, st)
        if (i + 1) % TUNE_EVERY == 0:
            _tune(m, st, window)
    st.accepted.clear()
    st.proposed.clear()
    counts = _classifier(m, g, family)
    r = family.r
    nb = schedule.batches
    n_meas = schedule.sweeps // schedule.measure_every
    sums = np.zeros((nb, r + 2))
    ns = np.zeros(nb)
    n_sites = g.n_sites
    n_blocks = g.n_blocks
    prev = -1
    for k in range(n_meas):
        b = k * nb // n_meas
        if b != prev:
            # resynchronise the running energy at each batch start
            st.energy = _energy(m, g, st.config)
            prev = b
        for _ in range(schedule.measure_every):
            sweep(m, g, beta, st)
        sums[b, 0] += st.energy / n_sites
        sums[b, 1:] += counts(st.config) / n_blocks
        ns[b] += 1
    mean, err, bad = _batch_stats(sums, ns)
    flags = []
    names = family.names
    labels = ["energy"] + names + ["bad"]
    for lab, flag in zip(labels, bad):
        if flag:
            flags.append(f"nonconverged:{lab}")
    return ScanRow(
        beta=float(beta),
        start=start,
        energy_mean=float(mean[0]),
        energy_err=float(err[0]),
        rho={nm: float(mean[1 + i]) for i, nm in enumerate(names)},
        rho_err={nm: float(err[1 + i]) for i, nm in enumerate(names)},
        rho_bad=float(mean[1 + r]),
        rho_bad_err=float(err[1 + r]),
        n_samples=int(ns.sum()),
        acceptance=float(st.acceptance()),
        flags=flags,
        final_energy=_energy(m, g, st.config) / n_sites,
    )


def estimate_rho(m, g: TorusGeometry, beta: float, family: GoodFamily, schedule: Schedule = Schedule(),
                 start: str | None = None, seed: int = 0) -> ScanRow:
    return run_chain(m, g, beta, family, schedule, start or start_names(m)[1], seed, (0, 0))


_TASK: dict = {}


def _run_task(i):
    t = _TASK
    b, s = t["jobs"][i]
    return run_chain(t["m"], t["g"], t["betas"][b], t["family"], t["schedule"], t["starts"][s], t["seed"], (b, s))


def beta_scan(m, g: TorusGeometry, family: GoodFamily, betas, schedule: Schedule = Schedule(),
              starts="both", seed: int = 0, workers: int = 1) -> ScanCurve:
    """Run one chain per (β, start); ``starts`` is 'both', a start name or a list of names."""
    betas = [float(b) for b in betas]
    if betas != sorted(betas):
        raise ValueError("the beta grid must be sorted")
    names = start_names(m)
    if starts == "both":
        starts = list(names)
    elif isinstance(starts, str):
        starts = [starts]
    idx = {"ordered": 0, "disordered": 1, "stripes_h": 0, "stripes_v": 1}
    jobs = [(b, idx[s]) for b in range(len(betas)) for s in starts]
    all_starts = list(names)
    global _TASK
    _TASK = {"m": m, "g": g, "betas": betas, "family": family, "schedule": schedule, "starts": all_starts,
             "seed": seed, "jobs": jobs}
    try:
        if workers > 1 and len(jobs) > 1:
            ctx = multiprocessing.get_context("fork")
            with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as ex:
                rows = list(ex.map(_run_task, range(len(jobs))))
        else:
            rows = [_run_task(i) for i in range(len(jobs))]
    finally:
        _TASK = {}
    return ScanCurve(list(family.names), rows, getattr(m, "kind", ""))


# ------------------------------------------------------------ gap report


@dataclass
class GapReport:
    bracket: tuple | None
    gap: tuple | None
    width: float
    eps: float
    forbidden_violations: list
    dichotomy_failures: list
    outside_failures: list
    disagreements: list

    @property
    def empty(self) -> bool:
        return self.bracket is None

    def to_dict(self):
        return {
            "bracket": None if self.bracket is None else list(self.bracket),
            "gap": None if self.gap is None else list(self.gap),
            "width": self.width,
            "eps": self.eps,
            "empty": self.empty,
            "forbidden_violations": self.forbidden_violations,
            "dichotomy_failures": self.dichotomy_failures,
            "outside_failures": self.outside_failures,
            "disagreements": self.disagreements,
        }


def _row_id(r: ScanRow) -> dict:
    name, val = r.max_good()
    return {"beta": r.beta, "start": r.start, "energy": r.energy_mean, "max_event": name, "max_rho": val,
            "rho_bad": r.rho_bad}


def gap_report(curve: ScanCurve, eps: float = 0.1, sigmas: float = NONCONVERGENCE_SIGMAS) -> GapReport:
    """Hysteresis bracket, forbidden energy interval and the ρ dichotomy.

    The bracket spans the β values where the two starts disagree in energy by
    more than ``sigmas`` combined standard errors. The gap runs from the
    largest lower-branch energy to the smallest upper-branch energy over the
    bracket.
    """
    starts = curve.starts()
    dis = []
    if len(starts) >= 2:
        a, b = curve.branch(starts[0]), curve.branch(starts[1])
        by_beta = {r.beta: r for r in b}
        for ra in a:
            rb = by_beta.get(ra.beta)
            if rb is None:
                continue
            tol = sigmas * math.hypot(ra.energy_err, rb.energy_err)
            if abs(ra.energy_mean - rb.energy_mean) > tol:
                lo, hi = sorted((ra, rb), key=lambda r: r.energy_mean)
                dis.append((ra.beta, lo, hi))
    failures = []
    outside = []
    for r in curve.rows:
        if not r.converged:
            continue
        _, best = r.max_good()
        if best < 1 - eps:
            failures.append(_row_id(r))
    if not dis:
        for r in curve.rows:
            if r.converged and (r.max_good()[1] < 1 - eps or r.rho_bad > eps):
                outside.append(_row_id(r))
        return GapReport(None, None, 0.0, eps, [], failures, outside, [])
    bl, bh = min(d[0] for d in dis), max(d[0] for d in dis)
    gap_lo = max(d[1].energy_mean for d in dis)
    gap_hi = min(d[2].energy_mean for d in dis)
    width = gap_hi - gap_lo
    violations = []
    if width > 0:
        for r in curve.rows:
            if r.converged and gap_lo + r.energy_err < r.energy_mean < gap_hi - r.energy_err:
                violations.append(_row_id(r))
    for r in curve.rows:
        if r.converged and not bl <= r.beta <= bh and (r.max_good()[1] < 1 - eps or r.rho_bad > eps):
            outside.append(_row_id(r))
    disagreements = [{"beta": d[0], "lower": d[1].energy_mean, "upper": d[2].energy_mean} for d in dis]
    return GapReport((bl, bh), (gap_lo, gap_hi), width, eps, violations, failures, outside, disagreements)


# ------------------------------------------------------ detailed balance


def detailed_balance_check(m, g: TorusGeometry, beta: float, trials: int = 10**4, seed: int = 0) -> dict:
    """Compare kernel energy changes with full torus energies on random single moves.

    For each move c -> c' the Metropolis flows w(c) P(c -> c') and
    w(c') P(c' -> c) are evaluated with exact weights; proposals are symmetric.
    """
    rng = np.random.default_rng(seed)
    nbr, nbr2, dnbr = _tables(g)
    n = g.n_sites
    worst_de = 0.0
    worst_flow = 0.0
    for _ in range(trials):
        c = _contiguous(m, random_configuration(m, g, rng))
        c2 = Configuration(c.spins.copy(), None if c.occ is None else c.occ.copy(),
                           None if c.edges is None else c.edges.copy())
        x = int(rng.integers(n))
        if isinstance(m, Potts):
            new = int(rng.integers(1, m.q + 1))
            de = K.potts_delta(c.spins, nbr, nbr2, float(m.j), float(m.j2), x, new)
            c2.spins[x] = new
        elif isinstance(m, DilutedPotts):
            p = int(rng.integers(0, 2 * m.q))
            de = K.diluted_potts_delta(c.spins, c.occ, nbr, m.q, float(m.kappa), float(m.lam), x, p)
            c2.spins[x], c2.occ[x] = p % m.q + 1, p // m.q
        elif isinstance(m, DilutedXY):
            nn, ang = int(rng.integers(0, 2)), float(rng.uniform(-np.pi, np.pi))
            de = K.diluted_xy_local(c.spins, c.occ, nbr, float(m.kappa), float(m.lam), x, ang, nn) - \
                K.diluted_xy_local(c.spins, c.occ, nbr, float(m.kappa), float(m.lam), x, c.spins[x], c.occ[x])
            c2.spins[x], c2.occ[x] = ang, nn
        elif isinstance(m, O2AF):
            ang = float(rng.uniform(-np.pi, np.pi))
            de = K.o2af_local(c.spins, nbr, dnbr, float(m.gamma), x, ang) - \
                K.o2af_local(c.spins, nbr, dnbr, float(m.gamma), x, c.spins[x])
            c2.spins[x] = ang
        elif isinstance(m, NonlinearFerromagnet):
            ang = float(rng.uniform(-np.pi, np.pi))
            de = K.nlvm_local(c.spins, nbr, float(m.p), x, ang) - K.nlvm_local(c.spins, nbr, float(m.p), x, c.spins[x])
            c2.spins[x] = ang
        elif isinstance(m, Magnetostriction):
            r = c.edges.reshape(-1)
            if rng.random() < 0.5:
                de = K.ms_spin_delta(c.spins, r, nbr, float(m.J1), float(m.J2), float(m.eta_J), x)
                c2.spins[x] = -c2.spins[x]
            else:
                e = int(rng.integers(r.size))
                new = float(m.r_max * (1.0 - rng.random()))
                de = K.ms_edge_delta(c.spins, r, nbr, float(m.J1), float(m.J2), float(m.eta_J), float(m.kappa),
                                     float(m.lam), float(m.R), e, new)
                c2.edges.reshape(-1)[e] = new
        else:
            raise ModelError(f"unsupported model {m!r}")
        e1, e2 = _energy(m, g, c), _energy(m, g, c2)
        scale = max(1.0, abs(e1), abs(e2))
        worst_de = max(worst_de, abs(de - (e2 - e1)) / scale)
        # log flows: -βE + log min(1, e^{-βΔ}) on both sides
        f12 = -beta * e1 + min(0.0, -beta * de)
        f21 = -beta * e2 + min(0.0, beta * de)
        worst_flow = max(worst_flow, abs(f12 - f21) / max(1.0, abs(f12)))
    return {"trials": trials, "max_energy_error": worst_de, "max_flow_error": worst_flow}


def default_family(m, B: int = 1) -> GoodFamily:
    """The natural good-event family for a model kind."""
    if isinstance(m, Potts):
        return potts_events(m.q, B)
    if isinstance(m, DilutedPotts):
        return diluted_events("potts", m.q)
    if isinstance(m, DilutedXY):
        return diluted_events("xy")
    if isinstance(m, O2AF):
        return o2af_events(B=B)
    if isinstance(m, NonlinearFerromagnet):
        return nlvm_events(C=min(3.0, math.sqrt(m.p)), p=m.p)
    if isinstance(m, Magnetostriction):
        return magnetostriction_events(eta=m.eta_J, eps=0.3, r_max=m.r_max)
    raise ModelError(f"unsupported model {m!r}")
