"""Single-site Metropolis sweep kernels.

Every kernel visits the sites in index order and reads its proposals and
uniforms from arrays drawn beforehand by the caller. The same source runs
compiled or interpreted, so both paths follow identical trajectories.
Each sweep returns (accepted moves, energy change).
"""

import math

import numpy as np

from ._accel import njit

TWO_PI = 2.0 * math.pi


@njit
def wrap(a):
    return math.pi - ((math.pi - a) % TWO_PI)


@njit
def _accept(de, beta, u):
    return de <= 0.0 or u < math.exp(-beta * de)


# ----------------------------------------------------------------- Potts


@njit
def potts_delta(s, nbr, nbr2, j, j2, x, new):
    old = s[x]
    de = 0.0
    for k in range(nbr.shape[0]):
        y = nbr[k, x]
        sy = s[y]
        de -= j * ((1.0 if new == sy else 0.0) - (1.0 if old == sy else 0.0))
    if j2 != 0.0:
        for k in range(nbr2.shape[0]):
            y = nbr2[k, x]
            if y == x:
                continue
            sy = s[y]
            de -= j2 * ((1.0 if new == sy else 0.0) - (1.0 if old == sy else 0.0))
    return de


@njit
def potts_sweep(s, nbr, nbr2, j, j2, beta, props, us):
    acc = 0
    tot = 0.0
    for x in range(s.shape[0]):
        new = props[x]
        if new == s[x]:
            continue
        de = potts_delta(s, nbr, nbr2, j, j2, x, new)
        if _accept(de, beta, us[x]):
            s[x] = new
            acc += 1
            tot += de
    return acc, tot


# --------------------------------------------------------- diluted Potts


@njit
def diluted_potts_local(s, n, nbr, kappa, lam, x, sx, nx):
    if nx == 0:
        return 0.0
    e = -lam
    for k in range(nbr.shape[0]):
        y = nbr[k, x]
        if n[y]:
            e += (0.0 if sx == s[y] else 1.0) - kappa
    return e


@njit
def diluted_potts_delta(s, n, nbr, q, kappa, lam, x, prop):
    new_n = prop // q
    new_s = prop % q + 1
    return diluted_potts_local(s, n, nbr, kappa, lam, x, new_s, new_n) - diluted_potts_local(
        s, n, nbr, kappa, lam, x, s[x], n[x]
    )


@njit
def diluted_potts_sweep(s, n, nbr, q, kappa, lam, beta, props, us):
    acc = 0
    tot = 0.0
    for x in range(s.shape[0]):
        p = props[x]
        new_n = p // q
        new_s = p % q + 1
        if new_n == n[x] and new_s == s[x]:
            continue
        de = diluted_potts_delta(s, n, nbr, q, kappa, lam, x, p)
        if _accept(de, beta, us[x]):
            s[x] = new_s
            n[x] = new_n
            acc += 1
            tot += de
    return acc, tot


# ------------------------------------------------------------ diluted XY


@njit
def diluted_xy_local(phi, n, nbr, kappa, lam, x, px, nx):
    if nx == 0:
        return 0.0
    e = -lam
    for k in range(nbr.shape[0]):
        y = nbr[k, x]
        if n[y]:
            e += 1.0 - math.cos(px - phi[y]) - kappa
    return e


@njit
def diluted_xy_sweep(phi, n, nbr, kappa, lam, beta, width, occ_props, shifts, us):
    acc = 0
    tot = 0.0
    for x in range(phi.shape[0]):
        new_n = occ_props[x]
        new_p = wrap(phi[x] + width * shifts[x])
        de = diluted_xy_local(phi, n, nbr, kappa, lam, x, new_p, new_n) - diluted_xy_local(
            phi, n, nbr, kappa, lam, x, phi[x], n[x]
        )
        if _accept(de, beta, us[x]):
            phi[x] = new_p
            n[x] = new_n
            acc += 1
            tot += de
    return acc, tot


# ------------------------------------------------------------------ O2AF


@njit
def o2af_local(phi, nbr, dnbr, gamma, x, px):
    e = 0.0
    for k in range(dnbr.shape[0]):
        e += math.cos(px - phi[dnbr[k, x]])
    for k in range(nbr.shape[0]):
        e += gamma * math.cos(px - phi[nbr[k, x]])
    return e


@njit
def o2af_sweep(phi, nbr, dnbr, gamma, beta, width, shifts, us):
    acc = 0
    tot = 0.0
    for x in range(phi.shape[0]):
        new_p = wrap(phi[x] + width * shifts[x])
        de = o2af_local(phi, nbr, dnbr, gamma, x, new_p) - o2af_local(phi, nbr, dnbr, gamma, x, phi[x])
        if _accept(de, beta, us[x]):
            phi[x] = new_p
            acc += 1
            tot += de
    return acc, tot


# ------------------------------------------------- nonlinear ferromagnet


@njit
def nlvm_local(phi, nbr, p, x, px):
    e = 0.0
    for k in range(nbr.shape[0]):
        e -= math.pow(0.5 * (1.0 + math.cos(px - phi[nbr[k, x]])), p)
    return e


@njit
def nlvm_sweep(phi, nbr, p, beta, width, shifts, us):
    acc = 0
    tot = 0.0
    for x in range(phi.shape[0]):
        new_p = wrap(phi[x] + width * shifts[x])
        de = nlvm_local(phi, nbr, p, x, new_p) - nlvm_local(phi, nbr, p, x, phi[x])
        if _accept(de, beta, us[x]):
            phi[x] = new_p
            acc += 1
            tot += de
    return acc, tot


# ------------------------------------------------------ magnetostriction


@njit
def _coupling(r, J1, J2, eta_J):
    return J1 if r <= eta_J else J2


@njit
def ms_spin_delta(sig, r, nbr, J1, J2, eta_J, x):
    # bond (x, x+e_i) is r[i, x]; bond (x-e_i, x) is r[i, x-e_i]
    n = sig.shape[0]
    h = 0.0
    d = nbr.shape[0] // 2
    for i in range(d):
        fwd = nbr[2 * i, x]
        bwd = nbr[2 * i + 1, x]
        h += _coupling(r[i * n + x], J1, J2, eta_J) * sig[fwd]
        h += _coupling(r[i * n + bwd], J1, J2, eta_J) * sig[bwd]
    return 2.0 * sig[x] * h


@njit
def ms_spin_sweep(sig, r, nbr, J1, J2, eta_J, beta, us):
    acc = 0
    tot = 0.0
    for x in range(sig.shape[0]):
        de = ms_spin_delta(sig, r, nbr, J1, J2, eta_J, x)
        if _accept(de, beta, us[x]):
            sig[x] = -sig[x]
            acc += 1
            tot += de
    return acc, tot


@njit
def ms_edge_delta(sig, r, nbr, J1, J2, eta_J, kappa, lam, R, e, new):
    n = sig.shape[0]
    d = nbr.shape[0] // 2
    i = e // n
    x = e % n
    y = nbr[2 * i, x]
    old = r[e]
    ss = sig[x] * sig[y]
    de = -(_coupling(new, J1, J2, eta_J) - _coupling(old, J1, J2, eta_J)) * ss
    de += kappa * ((new - R) ** 2 - (old - R) ** 2)
    if lam != 0.0:
        for j in range(d):
            if j == i:
                continue
            for b in (
                j * n + x,
                j * n + nbr[2 * j + 1, x],
                j * n + y,
                j * n + nbr[2 * j + 1, y],
            ):
                rb = r[b]
                de += lam * ((new - rb) ** 2 - (old - rb) ** 2)
    return de


@njit
def ms_edge_sweep(sig, r, nbr, J1, J2, eta_J, kappa, lam, R, r_max, beta, width, shifts, us):
    acc = 0
    tot = 0.0
    for e in range(r.shape[0]):
        new = r[e] + width * shifts[e]
        if new <= 0.0 or new > r_max:
            continue
        de = ms_edge_delta(sig, r, nbr, J1, J2, eta_J, kappa, lam, R, e, new)
        if _accept(de, beta, us[e]):
            r[e] = new
            acc += 1
            tot += de
    return acc, tot


# -------------------------------------------------------- observables


@njit
def potts_block_counts(s, blocks, bonds, q, counts):
    """Accumulate per-block Potts classes: counts[m-1] ordered m, counts[q] disordered."""
    for b in range(blocks.shape[0]):
        first = s[blocks[b, 0]]
        same = True
        for k in range(1, blocks.shape[1]):
            if s[blocks[b, k]] != first:
                same = False
                break
        if same:
            counts[first - 1] += 1
            continue
        dis = True
        for k in range(bonds.shape[0]):
            if s[blocks[b, bonds[k, 0]]] == s[blocks[b, bonds[k, 1]]]:
                dis = False
                break
        if dis:
            counts[q] += 1


KERNELS = {
    "potts": potts_sweep,
    "diluted_potts": diluted_potts_sweep,
    "diluted_xy": diluted_xy_sweep,
    "o2af": o2af_sweep,
    "nlvm": nlvm_sweep,
    "ms_spin": ms_spin_sweep,
    "ms_edge": ms_edge_sweep,
}


def as_index(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)
