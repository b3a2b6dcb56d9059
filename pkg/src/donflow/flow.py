"""The Donaldson geometric flow on the flat four-torus.

The flow is the negative gradient flow of the conformal energy

    E(rho) = integral of 2 |rho+|^2 / (|rho+|^2 - |rho-|^2)

over symplectic forms in a fixed cohomology class, taken with respect to
the Donaldson metric (gauge-fixed potentials paired through the pointwise
rho-metric Hodge star).  The evolution equation is

    d rho / dt = d star_rho d Theta(rho),

which stays inside the class exactly because the update is exact.
Time stepping is explicit RK4 under a parabolic step-size cap with
backtracking on energy increase, so energy monotonicity is enforced, not
hoped for.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from donflow import exterior as ext
from donflow import lattice as lat
from donflow.exterior import DegenerateForm
from donflow.snapshots import save_snapshot

U_FLOOR = ext.U_FLOOR

CSV_FIELDS = ("t", "dt", "energy", "residual_l2", "u_min", "l1_norm",
              "l1_bound", "coh_drift_max")


class StepFailure(RuntimeError):
    """Time stepping could not produce an admissible monotone step."""

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


@dataclass
class FlowState:
    rho: np.ndarray
    t: float
    dt: float
    monitors: dict


@dataclass
class EnergyReport:
    energy: float
    excess: float
    l1_norm: float
    l1_bound: float


@dataclass
class RunResult:
    reason: str            # "stationary" | "time"
    state: FlowState
    steps: int
    csv_path: Path
    snapshot_paths: list


def u_field(rho):
    return ext.u_of(rho)


def check_admissible(rho, u_floor=U_FLOOR):
    """Raise DegenerateForm (with the first offending site) if u <= u_floor."""
    u = ext.u_of(rho)
    if np.any(u <= u_floor):
        bad = np.argwhere(u <= u_floor)
        site = tuple(int(i) for i in bad[0])
        raise DegenerateForm(
            f"u <= {u_floor:g} at site {site} "
            f"({bad.shape[0]} sites total, u_min = {u.min():.3e})")
    return u


def energy(grid, rho, u_floor=U_FLOOR):
    """Total energy; >= 2 Vol with equality iff rho is self-dual pointwise."""
    u = check_admissible(rho, u_floor)
    plus, _ = ext.sd_split(rho)
    return lat.integrate(grid, ext.norm2_sq(plus) / u)


def theta_field(rho, u_floor=U_FLOOR):
    check_admissible(rho, u_floor)
    return ext.theta_point(rho, u_floor=u_floor)


def rhs(grid, rho, u_floor=U_FLOOR):
    """Minus the energy gradient: d star_rho d Theta(rho).  Exact by
    construction, so the cohomology class is conserved."""
    th = theta_field(rho, u_floor)
    f3 = lat.d2(grid, th)
    s3 = ext.star_rho3(f3, rho, u_floor=u_floor)
    return lat.d1(grid, s3)


def first_variation(grid, rho, rhohat, u_floor=U_FLOOR):
    """Differential of the energy: integral of Theta(rho) ^ rhohat."""
    th = theta_field(rho, u_floor)
    return lat.integrate(grid, ext.wedge22(th, rhohat))


def grho_field(rho, u_floor=U_FLOOR):
    return ext.g_rho(rho, u_floor=u_floor)


def donaldson_norm_sq(grid, rhohat, rho, cg_rtol=1e-10, u_floor=U_FLOOR):
    """Squared Donaldson norm of an exact 2-form at base point rho."""
    lam = lat.least_norm_potential(grid, rhohat, grho_field(rho, u_floor),
                                   rtol=cg_rtol)
    return lat.integrate(grid, ext.wedge13(lam, ext.star_rho1(lam, rho)))


def donaldson_pairing(grid, rha, rhb, rho, cg_rtol=1e-10, u_floor=U_FLOOR):
    """Donaldson inner product of two exact 2-forms at base point rho.

    Only the second argument's potential needs the gauge fix; the first may
    use any potential, which saves a CG solve.
    """
    lam_b = lat.least_norm_potential(grid, rhb, grho_field(rho, u_floor),
                                     rtol=cg_rtol)
    res, lam_a = lat.exactness_residual(grid, rha)
    if res > 1e-10:
        raise lat.NotExact(f"first argument is not exact (residual {res:.3e})")
    return lat.integrate(grid, ext.wedge13(lam_a, ext.star_rho1(lam_b, rho)))


def hessian_form(grid, rho, rhohat, u_floor=U_FLOOR):
    """Quadratic form of the energy Hessian: integral of Theta_dot ^ rhohat."""
    check_admissible(rho, u_floor)
    td = ext.theta_dot_point(rho, rhohat, u_floor=u_floor)
    return lat.integrate(grid, ext.wedge22(td, rhohat))


def l1_report(grid, rho, u_floor=U_FLOOR):
    """Energy report with the L1 bound |rho|_L1 <= sqrt(c (E - Vol))."""
    e = energy(grid, rho, u_floor)
    l1 = lat.integrate(grid, np.sqrt(ext.norm2_sq(rho)))
    c = lat.integrate(grid, ext.wedge22(rho, rho))
    bound = math.sqrt(max(c * (e - 1.0), 0.0))
    if l1 > bound + 1e-10:
        raise AssertionError(
            f"L1 bound violated: {l1:.15g} > {bound:.15g}")
    return EnergyReport(energy=e, excess=e - 2.0, l1_norm=l1, l1_bound=bound)


def residual_l2(grid, rho, u_floor=U_FLOOR):
    """Flat L2 norm of the flow's right hand side (stationarity monitor)."""
    return lat.l2_norm(grid, rhs(grid, rho, u_floor))


def monitors(grid, rho, coh0, u_floor=U_FLOOR):
    rep = l1_report(grid, rho, u_floor)
    drift = float(np.abs(lat.cohomology(grid, rho) - coh0).max())
    return {
        "energy": rep.energy,
        "residual_l2": residual_l2(grid, rho, u_floor),
        "u_min": float(ext.u_of(rho).min()),
        "l1_norm": rep.l1_norm,
        "l1_bound": rep.l1_bound,
        "coh_drift_max": drift,
    }


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------

def initial_data(grid, rng, epsilon=0.05, kmax=2, u_min_accept=0.5,
                 max_halvings=20):
    """rho0 = omega1 + d(eps * lam), lam a random trigonometric 1-form.

    lam is normalized to sup norm epsilon; if the perturbed form dips below
    u = u_min_accept anywhere, epsilon is halved and the same lam is reused,
    so the draw stays deterministic for a given seed.
    """
    lam = lat.random_trig_field(rng, kmax, ncomp=4)(grid)
    lam = lam / max(np.abs(lam).max(), 1e-300)
    base = grid.constant(ext.OMEGA1)
    eps = float(epsilon)
    for _ in range(max_halvings + 1):
        rho = base + lat.d1(grid, eps * lam)
        if ext.u_of(rho).min() > u_min_accept:
            return rho
        eps *= 0.5
    raise DegenerateForm(
        f"initial data rejected down to epsilon = {eps:g}")


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------

def stable_dt_cap(grid):
    """Explicit RK4 stability bound for the linearized flow.

    Near the minimum the right hand side acts like twice the (scheme)
    Laplacian on the anti-self-dual part, so steps must satisfy
    dt * 2 * max|laplace symbol| < 2.785; 2.5 leaves a margin.
    """
    return 2.5 / (2.0 * float(grid.laplace_symbol.max()))


def _rk4_candidate(grid, rho, dt, u_floor):
    k1 = rhs(grid, rho, u_floor)
    k2 = rhs(grid, rho + 0.5 * dt * k1, u_floor)
    k3 = rhs(grid, rho + 0.5 * dt * k2, u_floor)
    k4 = rhs(grid, rho + dt * k3, u_floor)
    return rho + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def step(grid, state, coh0, dt_max, u_floor=U_FLOOR, max_retries=20,
         dealias=False):
    """One accepted RK4 step: admissible at every stage and non-increasing in
    energy, else the step is halved and retried.  Raises StepFailure when the
    retry budget is exhausted."""
    e_old = state.monitors["energy"]
    dt = min(state.dt, dt_max)
    last_error = "energy increased"
    for _ in range(max_retries + 1):
        try:
            cand = _rk4_candidate(grid, state.rho, dt, u_floor)
            if dealias:
                cand = lat.dealias(grid, cand)
            u_min = ext.u_of(cand).min()
            if u_min <= u_floor:
                raise DegenerateForm(f"candidate u_min = {u_min:.3e}")
            e_new = energy(grid, cand, u_floor)
        except DegenerateForm as err:
            last_error = str(err)
            dt *= 0.5
            continue
        if e_new <= e_old:
            new = FlowState(rho=cand, t=state.t + dt,
                            dt=min(dt * 1.1, dt_max),
                            monitors=monitors(grid, cand, coh0, u_floor))
            return new
        last_error = f"energy increased by {e_new - e_old:.3e}"
        dt *= 0.5
    raise StepFailure(
        f"no admissible step after {max_retries} halvings: {last_error}",
        diagnostic={
            "t": state.t,
            "dt": dt,
            "error": last_error,
            "u_min": float(ext.u_of(state.rho).min()),
            "energy": e_old,
        })


class _OutputLock:
    """Guards an output directory against concurrent writers."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / ".lock"

    def __enter__(self):
        try:
            self.path.touch(exist_ok=False)
        except FileExistsError:
            raise StepFailure(
                f"output directory is locked by another run: {self.path}")
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)


def _format_row(row):
    return {k: format(v, ".17g") for k, v in row.items()}


def run(config, rho0=None):
    """Integrate the flow until stationarity or final time.

    Writes the monitor CSV and the initial/final snapshots into
    ``config.out_dir``.  On StepFailure the partial CSV, a failure snapshot
    and a diagnostic JSON are flushed before the exception propagates.
    """
    config.validate()
    grid = lat.Grid(config.n, config.scheme)
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if rho0 is None:
        rng = np.random.Generator(np.random.Philox(config.seed))
        rho0 = initial_data(grid, rng, config.epsilon, config.kmax)

    # the configured cap wins; otherwise stay below both the requested
    # parabolic number and the integrator's stability bound
    dt_cap = (config.dt_max if config.dt_max is not None
              else min(config.dt0, stable_dt_cap(grid)))

    csv_path = out_dir / "monitors.csv"
    snaps = []
    with _OutputLock(out_dir):
        coh0 = lat.cohomology(grid, rho0)
        try:
            state = FlowState(rho=rho0, t=0.0,
                              dt=min(config.dt0, dt_cap),
                              monitors=monitors(grid, rho0, coh0))
        except DegenerateForm as err:
            (out_dir / "failure.json").write_text(json.dumps(
                {"t": 0.0, "error": str(err),
                 "u_min": float(ext.u_of(rho0).min())},
                indent=2, sort_keys=True) + "\n")
            raise
        snaps.append(save_snapshot(out_dir / "snapshot_initial", grid,
                                   state.rho, state.t, state.monitors))
        steps = 0
        with open(csv_path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
            writer.writeheader()

            def emit(st):
                writer.writerow(_format_row({"t": st.t, "dt": st.dt, **st.monitors}))
                fh.flush()

            emit(state)
            try:
                while (state.monitors["residual_l2"] >= config.tol_stationary
                       and state.t < config.T):
                    state = step(grid, state, coh0, dt_cap,
                                 dealias=config.dealias)
                    steps += 1
                    if steps % config.out_every == 0:
                        emit(state)
            except StepFailure as err:
                if steps % config.out_every:
                    emit(state)
                snaps.append(save_snapshot(out_dir / "snapshot_failed", grid,
                                           state.rho, state.t, state.monitors))
                (out_dir / "failure.json").write_text(
                    json.dumps(err.diagnostic, indent=2, sort_keys=True) + "\n")
                raise
            if steps % config.out_every:
                emit(state)
        snaps.append(save_snapshot(out_dir / "snapshot_final", grid,
                                   state.rho, state.t, state.monitors))
    reason = ("stationary"
              if state.monitors["residual_l2"] < config.tol_stationary
              else "time")
    return RunResult(reason=reason, state=state, steps=steps,
                     csv_path=csv_path, snapshot_paths=snaps)
