import csv
import math

import numpy as np
import pytest

from donflow import exterior as ext
from donflow import flow
from donflow import lattice as lat
from donflow.config import RunConfig
from donflow.exterior import DegenerateForm


def sgrid(n=8):
    return lat.Grid(n, "spectral")


def perturbed_rho(grid, rng, eps=0.3, kmax=2):
    lam = lat.random_trig_field(rng, kmax, ncomp=4)(grid)
    pert = lat.d1(grid, lam)
    pert *= eps / np.abs(pert).max()
    return grid.constant(ext.OMEGA1) + pert


def exact_direction(grid, rng, amp=0.5, kmax=2):
    mu = lat.random_trig_field(rng, kmax, ncomp=4)(grid)
    mu *= amp / np.abs(mu).max()
    return mu, lat.d1(grid, mu)


def test_energy_values():
    g = sgrid(8)
    assert flow.energy(g, g.constant(ext.OMEGA1)) == pytest.approx(2.0, abs=1e-13)
    assert flow.energy(g, g.constant(0.7 * ext.OMEGA1)) == pytest.approx(2.0, abs=1e-12)
    rho = g.constant([1.5, 0, 0, 0.5, 0, 0])
    assert flow.energy(g, rho) == pytest.approx(8 / 3, abs=1e-12)


def test_energy_lower_bound(rng):
    g = sgrid(8)
    for eps in (0.1, 0.4, 0.7):
        rho = perturbed_rho(g, rng, eps)
        e = flow.energy(g, rho)
        assert e >= 2.0 - 1e-12
        minus = ext.sd_split(rho)[1]
        if np.abs(minus).max() > 1e-12:
            assert e > 2.0


def test_energy_degenerate_reports_site():
    g = sgrid(4)
    rho = g.constant(ext.OMEGA1)
    rho[1, 2, 3, 0] = [1, 0, 0, -1, 0, 0]   # u = -1 at one site
    with pytest.raises(DegenerateForm) as err:
        flow.energy(g, rho)
    assert "(1, 2, 3, 0)" in str(err.value)


def test_rhs_vanishes_at_stationary_points(rng):
    g = sgrid(8)
    assert np.abs(flow.rhs(g, g.constant(ext.OMEGA1))).max() == 0.0
    const = g.constant([1.2, 0.1, -0.3, 0.9, 0.2, 0.0])
    assert ext.u_of(const).min() > 0.5
    assert np.abs(flow.rhs(g, const)).max() < 1e-11


def test_rhs_linearization_at_minimum(rng):
    # rhs(omega1 + eps rh) ~ eps * d star d (-2 rh_minus) to O(eps^2)
    g = sgrid(8)
    _, rh = exact_direction(g, rng, amp=0.5)
    minus = ext.sd_split(rh)[1]
    lin = lat.d1(g, ext.star3_flat(lat.d2(g, -2.0 * minus)))
    for eps in (1e-4, 5e-5):
        r = flow.rhs(g, g.constant(ext.OMEGA1) + eps * rh) / eps
        err = lat.l2_norm(g, r - lin)
        assert err < 10 * eps * lat.l2_norm(g, lin)


def test_first_variation_vanishes_at_minimum(rng):
    g = sgrid(8)
    _, rh = exact_direction(g, rng)
    val = flow.first_variation(g, g.constant(ext.OMEGA1), rh)
    assert abs(val) < 1e-12


def test_first_variation_matches_energy_differences(rng):
    g = sgrid(8)
    rho = perturbed_rho(g, rng, 0.3)
    _, rh = exact_direction(g, rng, amp=0.3)
    val = flow.first_variation(g, rho, rh)

    def fd(t):
        return (flow.energy(g, rho + t * rh) - flow.energy(g, rho - t * rh)) / (2 * t)

    e1, e2 = abs(fd(1e-3) - val), abs(fd(5e-4) - val)
    assert e1 < 1e-5 * max(1.0, abs(val))
    assert 3.0 < e1 / e2 < 5.0


def test_donaldson_norm_values(rng):
    g = sgrid(8)
    omega = g.constant(ext.OMEGA1)
    assert flow.donaldson_norm_sq(g, g.zeros(2), omega) == 0.0
    x0 = g.coords()[0] + np.zeros(g.shape)
    mu = np.zeros(g.shape + (4,))
    mu[..., 1] = np.sin(2 * np.pi * x0)
    rh = lat.d1(g, mu)
    assert flow.donaldson_norm_sq(g, rh, omega) == pytest.approx(0.5, abs=1e-9)
    _, rh2 = exact_direction(g, rng)
    assert flow.donaldson_norm_sq(g, rh2, omega) > 0


def test_gradient_metric_consistency(rng):
    g = sgrid(8)
    for _ in range(5):
        rho = perturbed_rho(g, rng, 0.25)
        _, rh = exact_direction(g, rng, amp=0.4)
        lhs = flow.first_variation(g, rho, rh)
        rhs_val = flow.donaldson_pairing(g, rh, flow.rhs(g, rho), rho)
        assert lhs == pytest.approx(-rhs_val, rel=1e-6, abs=1e-10)


def test_energy_decay_rate_is_gradient_norm(rng):
    g = sgrid(8)
    rho = perturbed_rho(g, rng, 0.3)
    r = flow.rhs(g, rho)
    de = flow.first_variation(g, rho, r)
    assert de <= 0
    assert de == pytest.approx(-flow.donaldson_norm_sq(g, r, rho), rel=1e-6)


def test_hessian_at_minimum_worked_value():
    g = sgrid(8)
    omega = g.constant(ext.OMEGA1)
    assert flow.hessian_form(g, omega, g.zeros(2)) == 0.0
    x0 = g.coords()[0] + np.zeros(g.shape)
    mu = np.zeros(g.shape + (4,))
    mu[..., 1] = np.sin(2 * np.pi * x0)
    rh = lat.d1(g, mu)
    assert flow.hessian_form(g, omega, rh) == pytest.approx(2 * np.pi ** 2, rel=1e-12)
    flat = lat.integrate(g, ext.norm2_sq(rh))
    assert flow.hessian_form(g, omega, rh) == pytest.approx(flat, rel=1e-12)
    # equivalent forms: 2 int |rh_minus|^2, with int rh ^ rh = 0 for exact rh
    minus = ext.sd_split(rh)[1]
    assert flow.hessian_form(g, omega, rh) == pytest.approx(
        2 * lat.integrate(g, ext.norm2_sq(minus)), rel=1e-12)
    assert abs(lat.integrate(g, ext.wedge22(rh, rh))) < 1e-12


def test_hessian_matches_first_variation_differences(rng):
    g = sgrid(8)
    rho = perturbed_rho(g, rng, 0.2)
    _, rh = exact_direction(g, rng, amp=0.3)
    val = flow.hessian_form(g, rho, rh)

    def fd(t):
        return (flow.first_variation(g, rho + t * rh, rh)
                - flow.first_variation(g, rho - t * rh, rh)) / (2 * t)

    e1, e2 = abs(fd(1e-3) - val), abs(fd(5e-4) - val)
    assert e1 < 1e-4 * max(1.0, abs(val))
    assert 3.0 < e1 / e2 < 5.0


def test_hessian_polarization_symmetric(rng):
    g = sgrid(8)
    rho = perturbed_rho(g, rng, 0.2)
    _, a = exact_direction(g, rng, amp=0.3)
    _, b = exact_direction(g, rng, amp=0.3)
    bil_ab = lat.integrate(g, ext.wedge22(ext.theta_dot_point(rho, a), b))
    bil_ba = lat.integrate(g, ext.wedge22(ext.theta_dot_point(rho, b), a))
    scale = abs(bil_ab) + abs(bil_ba) + 1.0
    assert abs(bil_ab - bil_ba) < 1e-10 * scale


def test_l1_report_equality_cases(rng):
    g = sgrid(8)
    rep = flow.l1_report(g, g.constant(ext.OMEGA1))
    assert rep.l1_norm == pytest.approx(math.sqrt(2), rel=1e-12)
    assert rep.l1_bound == pytest.approx(math.sqrt(2), rel=1e-12)
    rep3 = flow.l1_report(g, g.constant(3.0 * ext.OMEGA1))
    assert rep3.l1_norm == pytest.approx(rep3.l1_bound, rel=1e-12)
    rho = g.constant([1.5, 0, 0, 0.5, 0, 0])
    rep2 = flow.l1_report(g, rho)
    # c = int rho ^ rho = 1.5 and E = 8/3, so the bound sqrt(1.5 * 5/3) is
    # attained: constant fields always sit on the Cauchy-Schwarz equality
    assert rep2.l1_norm == pytest.approx(math.sqrt(2.5), rel=1e-12)
    assert rep2.l1_bound == pytest.approx(math.sqrt(2.5), rel=1e-12)
    pert = perturbed_rho(g, rng, 0.4)
    repp = flow.l1_report(g, pert)
    assert repp.l1_norm <= repp.l1_bound + 1e-10
    assert repp.l1_norm < repp.l1_bound


def _state(grid, rho, dt):
    coh0 = lat.cohomology(grid, rho)
    return flow.FlowState(rho=rho, t=0.0, dt=dt,
                          monitors=flow.monitors(grid, rho, coh0)), coh0


def test_step_is_stationary_at_minimum():
    g = sgrid(8)
    st, coh0 = _state(g, g.constant(ext.OMEGA1), dt=0.2 / 64)
    new = flow.step(g, st, coh0, dt_max=0.2 / 64)
    assert np.array_equal(new.rho, st.rho)
    assert new.monitors["energy"] == pytest.approx(2.0, abs=1e-13)


def test_step_decreases_energy(rng):
    g = sgrid(8)
    rng2 = np.random.Generator(np.random.Philox(5))
    rho0 = flow.initial_data(g, rng2, epsilon=0.05, kmax=2)
    st, coh0 = _state(g, rho0, dt=0.2 / 64)
    energies = [st.monitors["energy"]]
    for _ in range(10):
        st = flow.step(g, st, coh0, dt_max=0.2 / 64)
        energies.append(st.monitors["energy"])
        assert st.monitors["coh_drift_max"] < 1e-12
    diffs = np.diff(energies)
    assert np.all(diffs <= 0)
    assert energies[-1] < energies[0]


def test_step_survives_huge_dt(rng):
    g = sgrid(8)
    rng2 = np.random.Generator(np.random.Philox(6))
    rho0 = flow.initial_data(g, rng2, epsilon=0.05, kmax=2)
    st, coh0 = _state(g, rho0, dt=1.0)
    new = flow.step(g, st, coh0, dt_max=1.0)
    # automatic reduction to a stable step
    assert new.t - st.t < 1.0
    assert new.monitors["energy"] <= st.monitors["energy"]


def test_step_failure_near_degenerate():
    g = sgrid(8)
    x0 = g.coords()[0] + np.zeros(g.shape)
    mu = np.zeros(g.shape + (4,))
    mu[..., 1] = np.sin(2 * np.pi * x0)
    rho = g.constant(ext.OMEGA1) + lat.d1(g, mu) * 0.9999 / (2 * np.pi)
    u = ext.u_of(rho)
    assert 0 < u.min() < 2e-4
    st, coh0 = _state(g, rho, dt=0.2 / 64)
    with pytest.raises(flow.StepFailure) as err:
        flow.step(g, st, coh0, dt_max=0.2 / 64, max_retries=8)
    assert err.value.diagnostic["t"] == 0.0


def test_step_with_dealiasing(rng):
    g = sgrid(8)
    rng2 = np.random.Generator(np.random.Philox(9))
    rho0 = flow.initial_data(g, rng2, epsilon=0.05, kmax=2)
    st, coh0 = _state(g, rho0, dt=flow.stable_dt_cap(g))
    for _ in range(5):
        st = flow.step(g, st, coh0, dt_max=flow.stable_dt_cap(g), dealias=True)
    # dealiased iterates have no spectrum beyond the two-thirds cutoff
    spec = np.abs(lat.fft4(st.rho))
    keep = np.abs(g.freq) <= g.n / 3.0
    zero = ~(keep.reshape(-1, 1, 1, 1) & keep.reshape(1, -1, 1, 1)
             & keep.reshape(1, 1, -1, 1) & keep.reshape(1, 1, 1, -1))
    assert spec[zero].max() < 1e-10 * spec.max()
    assert st.monitors["coh_drift_max"] < 1e-12
    assert st.monitors["energy"] <= 2.0 + (rho0 ** 2).sum()


def test_run_fd2_scheme(tmp_path):
    cfg = RunConfig(n=8, scheme="fd2", T=0.05, epsilon=0.05, seed=11,
                    out_every=5, out_dir=str(tmp_path / "fd2"))
    res = flow.run(cfg)
    rows = list(csv.DictReader(open(res.csv_path)))
    energies = [float(r["energy"]) for r in rows]
    assert all(b <= a for a, b in zip(energies, energies[1:]))
    assert max(float(r["coh_drift_max"]) for r in rows) < 1e-15


def test_run_stationary_immediately(tmp_path):
    cfg = RunConfig(n=8, T=1.0, out_dir=str(tmp_path / "out"))
    g = lat.Grid(8)
    res = flow.run(cfg, rho0=g.constant(ext.OMEGA1))
    assert res.reason == "stationary"
    assert res.steps == 0
    rows = list(csv.DictReader(open(res.csv_path)))
    assert len(rows) == 1
    assert float(rows[0]["energy"]) == pytest.approx(2.0, abs=1e-13)
    assert (tmp_path / "out" / "snapshot_final.json").exists()


def test_run_short_flow_monotone(tmp_path):
    cfg = RunConfig(n=8, T=0.02, epsilon=0.05, kmax=2, seed=3, out_every=2,
                    out_dir=str(tmp_path / "out"))
    res = flow.run(cfg)
    assert res.reason in ("time", "stationary")
    rows = list(csv.DictReader(open(res.csv_path)))
    energies = [float(r["energy"]) for r in rows]
    assert all(b <= a + 1e-14 for a, b in zip(energies, energies[1:]))
    assert max(float(r["coh_drift_max"]) for r in rows) < 1e-12
    for r in rows:
        for k, v in r.items():
            assert math.isfinite(float(v)), (k, v)


def test_run_flush_on_failure(tmp_path):
    g = lat.Grid(8)
    x0 = g.coords()[0] + np.zeros(g.shape)
    mu = np.zeros(g.shape + (4,))
    mu[..., 1] = np.sin(2 * np.pi * x0)
    rho0 = g.constant(ext.OMEGA1) + lat.d1(g, mu) * 0.9999 / (2 * np.pi)
    cfg = RunConfig(n=8, T=1.0, out_dir=str(tmp_path / "out"))
    with pytest.raises(flow.StepFailure):
        flow.run(cfg, rho0=rho0)
    out = tmp_path / "out"
    assert (out / "failure.json").exists()
    assert (out / "snapshot_failed.json").exists()
    rows = list(csv.DictReader(open(out / "monitors.csv")))
    assert rows, "partial CSV must be flushed"
    for r in rows:
        assert all(math.isfinite(float(v)) for v in r.values())
    assert not (out / ".lock").exists()


def test_run_rejects_locked_directory(tmp_path):
    out = tmp_path / "out"
    out.mkdir()
    (out / ".lock").touch()
    cfg = RunConfig(n=8, T=1.0, out_dir=str(out))
    g = lat.Grid(8)
    with pytest.raises(flow.StepFailure):
        flow.run(cfg, rho0=g.constant(ext.OMEGA1))
    (out / ".lock").unlink()
