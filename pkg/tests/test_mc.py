import math

import numpy as np
import pytest
from scipy import stats

from chessgap.events import OMEGA, GoodFamily, o2af_events, potts_events
from chessgap.lattice import TorusGeometry
from chessgap.mc import (
    ScanCurve,
    ScanRow,
    Schedule,
    _batch_stats,
    beta_scan,
    chain_rng,
    default_family,
    detailed_balance_check,
    estimate_rho,
    gap_report,
    new_chain,
    run_chain,
    start_names,
    sweep,
)
from chessgap.models import (
    DilutedPotts,
    DilutedXY,
    Magnetostriction,
    ModelError,
    NonlinearFerromagnet,
    O2AF,
    Potts,
    torus_energy,
)

G8 = TorusGeometry(2, 8, 1)
G16 = TorusGeometry(2, 16, 1)
SHORT = Schedule(burn_in=200, sweeps=2000, batches=10)

MODELS = [
    Potts(10),
    Potts(3, j2=-0.5),
    DilutedPotts(3, lam=0.4, kappa=0.2),
    DilutedXY(lam=0.3, kappa=0.1),
    O2AF(gamma=0.7),
    NonlinearFerromagnet(5.0),
    Magnetostriction(),
]


@pytest.mark.parametrize("m", MODELS, ids=lambda m: m.kind)
def test_detailed_balance(m):
    res = detailed_balance_check(m, G8, 0.8, trials=10**4, seed=1)
    assert res["max_energy_error"] < 1e-9
    assert res["max_flow_error"] < 1e-9


@pytest.mark.parametrize("m", MODELS, ids=lambda m: m.kind)
def test_running_energy_tracks_configuration(m):
    st = new_chain(m, G8, start_names(m)[1], seed=5)
    for _ in range(30):
        sweep(m, G8, 0.7, st)
    assert st.sweeps == 30
    assert st.energy == pytest.approx(torus_energy(m, G8, st.config), abs=1e-8)


def test_beta_zero_marginals_uniform():
    m = Potts(10)
    st = new_chain(m, G16, "ordered", seed=3)
    for _ in range(20):
        sweep(m, G16, 0.0, st)
    counts = np.zeros(10)
    for _ in range(200):
        sweep(m, G16, 0.0, st)
        counts += np.bincount(st.config.spins - 1, minlength=10)
    assert stats.chisquare(counts).pvalue > 0.01


def test_beta_zero_potts_oracles():
    m = Potts(10)
    row = estimate_rho(m, G16, 0.0, potts_events(10), Schedule(burn_in=100, sweeps=20000, batches=20), seed=11)
    dis = (9**4 + 9) / 10**4
    assert abs(row.energy_mean + 0.2) <= 3 * row.energy_err + 1e-12
    assert abs(row.rho["dis"] - dis) <= 3 * row.rho_err["dis"]


def test_beta_zero_nlvm_oracle():
    # independent uniform angles: E[((1 + cos)/2)^p] = C(2p, p) / 4^p for integer p
    p = 3
    m = NonlinearFerromagnet(p)
    row = estimate_rho(m, G16, 0.0, default_family(m), Schedule(burn_in=100, sweeps=10000, batches=20), seed=2)
    want = -2 * math.comb(2 * p, p) / 4**p
    assert abs(row.energy_mean - want) <= 3 * row.energy_err


def test_low_temperature_stays_ordered():
    m = Potts(10)
    row = run_chain(m, G16, 3.0, potts_events(10), SHORT, "ordered", seed=1)
    assert row.rho["ord_1"] > 0.9
    assert row.rho["dis"] < 0.05


def test_omega_density_is_one():
    m = Potts(3)
    fam = GoodFamily("omega", [OMEGA], 1)
    row = run_chain(m, G8, 0.5, fam, SHORT, "disordered", seed=1)
    assert row.rho["omega"] == 1.0 and row.rho_bad == 0.0


@pytest.mark.parametrize("m", MODELS[2:], ids=lambda m: m.kind)
def test_densities_partition_unity(m):
    g = TorusGeometry(2, 8, 4) if isinstance(m, O2AF) else G8
    fam = default_family(m, g.B)
    row = run_chain(m, g, 1.0, fam, Schedule(burn_in=50, sweeps=200, batches=4), start_names(m)[0], seed=4)
    assert sum(row.rho.values()) + row.rho_bad == pytest.approx(1.0, abs=1e-12)


def test_angle_widths_tuned_to_target():
    m = NonlinearFerromagnet(5.0)
    row = run_chain(m, G8, 2.0, default_family(m), Schedule(burn_in=2000, sweeps=1000, batches=4), "disordered")
    assert 0.3 <= row.acceptance <= 0.6


def test_low_temperature_o2af_stripes():
    # thermal noise at β = 5 only fits inside a loose stripe tolerance
    m = O2AF(gamma=1.0)
    g = TorusGeometry(2, 16, 4)
    fam = o2af_events(0.9, 4)
    for start in start_names(m):
        row = run_chain(m, g, 5.0, fam, Schedule(burn_in=500, sweeps=2000, batches=10), start, seed=7)
        tot = row.rho["stripes_h"] + row.rho["stripes_v"]
        assert tot > 0.8
        assert max(row.rho.values()) > 0.8
        assert row.max_good()[0] == start


def test_identical_seeds_identical_curves(tmp_path):
    m = Potts(4)
    fam = potts_events(4)
    sched = Schedule(burn_in=20, sweeps=200, batches=4)
    paths = []
    for k in range(2):
        c = beta_scan(m, G8, fam, [0.5, 1.2], sched, seed=9)
        p = tmp_path / f"c{k}.csv"
        c.write_csv(p, "h", 9)
        paths.append(p.read_bytes())
    assert paths[0] == paths[1]
    other = beta_scan(m, G8, fam, [0.5, 1.2], sched, seed=10)
    other.write_csv(tmp_path / "o.csv", "h", 10)
    assert (tmp_path / "o.csv").read_bytes() != paths[0]


def test_parallel_scan_matches_serial():
    m = Potts(4)
    fam = potts_events(4)
    sched = Schedule(burn_in=20, sweeps=100, batches=4)
    a = beta_scan(m, G8, fam, [0.5, 1.0], sched, seed=3)
    b = beta_scan(m, G8, fam, [0.5, 1.0], sched, seed=3, workers=2)
    assert [r.energy_mean for r in a.rows] == [r.energy_mean for r in b.rows]


def test_chain_streams_are_independent():
    a = chain_rng(1, (0, 0)).random(5)
    b = chain_rng(1, (0, 1)).random(5)
    c = chain_rng(1, (0, 0)).random(5)
    assert not np.array_equal(a, b) and np.array_equal(a, c)


def test_scan_rejects_unsorted_grid():
    with pytest.raises(ValueError):
        beta_scan(Potts(3), G8, potts_events(3), [1.0, 0.5], SHORT)


def test_schedule_validation():
    with pytest.raises(ValueError):
        Schedule(batches=1)
    with pytest.raises(ValueError):
        Schedule(sweeps=10, batches=20)


def test_stripe_start_needs_o2af():
    with pytest.raises(ModelError):
        new_chain(Potts(3), G8, "stripes_h")


def test_batch_stats_flags_drift():
    sums = np.concatenate([np.zeros(10), np.ones(10)])[:, None] + 1e-3 * np.arange(20)[:, None] % 3
    _, _, bad = _batch_stats(sums, np.ones(20))
    assert bad[0]
    rng = np.random.default_rng(0)
    _, _, bad = _batch_stats(rng.normal(size=(20, 1)), np.ones(20))
    assert not bad[0]


def _row(beta, start, e, ord_rho, dis_rho, err=0.001):
    bad = 1 - ord_rho - dis_rho
    return ScanRow(beta, start, e, err, {"ord": ord_rho, "dis": dis_rho}, {"ord": err, "dis": err}, bad, err, 100,
                   1.0)


def test_gap_report_on_synthetic_step():
    rows = []
    for beta in (1.0, 1.1, 1.2, 1.3, 1.4):
        rows.append(_row(beta, "ordered", -1.8 if beta >= 1.1 else -0.7, 0.95 if beta >= 1.1 else 0.0,
                         0.0 if beta >= 1.1 else 0.95))
        rows.append(_row(beta, "disordered", -0.7 if beta <= 1.3 else -1.8, 0.0 if beta <= 1.3 else 0.95,
                         0.95 if beta <= 1.3 else 0.0))
    rep = gap_report(ScanCurve(["ord", "dis"], rows), eps=0.1)
    assert rep.bracket == (1.1, 1.3)
    assert rep.gap == (-1.8, -0.7)
    assert rep.width == pytest.approx(1.1)
    assert not rep.outside_failures and not rep.dichotomy_failures and not rep.forbidden_violations


def test_gap_report_flags_forbidden_energies():
    rows = [
        _row(1.0, "ordered", -1.8, 0.95, 0.0),
        _row(1.0, "disordered", -0.7, 0.0, 0.95),
        _row(1.1, "ordered", -1.2, 0.5, 0.4),
        _row(1.1, "disordered", -1.2, 0.5, 0.4),
    ]
    rep = gap_report(ScanCurve(["ord", "dis"], rows))
    assert len(rep.forbidden_violations) == 2
    assert len(rep.dichotomy_failures) == 2


def test_gap_report_empty_for_continuous_transition():
    m = Potts(2)
    curve = beta_scan(m, G8, potts_events(2), [0.5, 0.7, 0.9, 1.1, 1.3],
                      Schedule(burn_in=1000, sweeps=10000, batches=20), seed=1)
    rep = gap_report(curve)
    assert rep.empty and rep.width == 0.0
