"""The flat-torus hyperKaehler structure and its cross-formulas.

The standard triple (omega1, omega2, omega3) together with the quaternionic
complex structures gives closed-form alternatives for the energy, the Theta
map, the gradient and the Hessian in terms of the moment-map functions

    K_i = (omega_i ^ rho) / dvol_rho.

Every function here is an independent route to a quantity the flow module
computes differently, which makes this module the oracle suite for the flow.
"""

from __future__ import annotations

import numpy as np

from donflow import exterior as ext
from donflow import lattice as lat
from donflow.exterior import DegenerateForm, U_FLOOR

OMEGAS = np.stack([ext.OMEGA1, ext.OMEGA2, ext.OMEGA3])

# quaternionic complex structures solving the cyclic compatibility relations;
# integer matrices (left multiplication by i, j, k)
J1, J2, J3 = ext.quaternion_triple(ext.OMEGA1, ext.OMEGA2, ext.OMEGA3)
JS = np.stack([J1, J2, J3])

_P_OMEGAS = np.stack([ext.form2_matrix(w) for w in OMEGAS])


def k_functions(rho, u_floor=U_FLOOR):
    """Moment-map functions K_i = (omega_i ^ rho)/dvol_rho, shape (..., 3)."""
    rho = np.asarray(rho)
    u = ext.u_of(rho)
    if np.any(u <= u_floor):
        raise DegenerateForm(f"u_min = {u.min():.3e} <= {u_floor:g}")
    return np.stack([ext.wedge22(w, rho) for w in OMEGAS], axis=-1) / u[..., None]


def energy_hk(grid, rho, u_floor=U_FLOOR):
    """Energy as half the L2 norm squared of K against dvol_rho."""
    u = ext.u_of(rho)
    k = k_functions(rho, u_floor)
    return 0.5 * lat.integrate(grid, np.sum(k ** 2, axis=-1) * u)


def theta_hk(rho, u_floor=U_FLOOR):
    """Theta through the moment maps: sum_i (K_i omega_i - K_i^2 rho / 2)."""
    rho = np.asarray(rho)
    k = k_functions(rho, u_floor)
    lin = np.einsum("...i,ic->...c", k, OMEGAS)
    return lin - 0.5 * np.sum(k ** 2, axis=-1)[..., None] * rho


def j_rho_fields(rho, u_floor=U_FLOOR):
    """The three twisted complex structures J_i^rho at every point."""
    return [ext.j_rho(j, rho, u_floor) for j in JS]


def grad_hk(grid, rho, u_floor=U_FLOOR):
    """Energy gradient as sum_i d(dK_i o J_i^rho); equals -rhs up to
    discretization error."""
    k = k_functions(rho, u_floor)
    total = np.zeros(grid.shape + (4,))
    for i, jr in enumerate(j_rho_fields(rho, u_floor)):
        dk = lat.d0(grid, k[..., i])
        total += np.einsum("...ji,...j->...i", jr, dk)   # dK o J = J^T dK
    return lat.d1(grid, total)


def vector_from_potential(rho, mu, u_floor=U_FLOOR):
    """The vector field X with i(X) rho = -mu (pointwise solve)."""
    rho = np.asarray(rho)
    pf = ext.pfaffian(rho)
    if np.any(np.abs(pf) <= u_floor):
        raise DegenerateForm("rho degenerate: no Hamiltonian-type solve")
    pinv = ext.form2_matrix_inv(rho, pf)
    return np.einsum("...ij,...j->...i", pinv, np.asarray(mu))


def hamiltonian_field(rho, h_scalar, grid, u_floor=U_FLOOR):
    """X_H with i(X_H) rho = dH."""
    dh = lat.d0(grid, h_scalar)
    return -vector_from_potential(rho, dh, u_floor)


def khat_hhat(grid, rho, rhohat, x, u_floor=U_FLOOR):
    """Linearized moment maps along rhohat and along the flow of X.

    K_hat_i = (omega_i - K_i rho) ^ rhohat / dvol_rho,
    H_hat_i = (d i(X) omega_i) ^ rho / dvol_rho,
    with X any vector field satisfying -d i(X) rho = rhohat.
    Returns two (..., 3) arrays.
    """
    rho, rhohat = np.asarray(rho), np.asarray(rhohat)
    u = ext.u_of(rho)
    k = k_functions(rho, u_floor)
    wr = np.stack([ext.wedge22(w, rhohat) for w in OMEGAS], axis=-1)
    khat = (wr - k * ext.wedge22(rho, rhohat)[..., None]) / u[..., None]
    hhat = np.empty_like(khat)
    for i in range(3):
        ixw = ext.interior2(x, np.broadcast_to(OMEGAS[i], rho.shape))
        hhat[..., i] = ext.wedge22(lat.d1(grid, ixw), rho) / u
    return khat, hhat


def hessian_hk(grid, rho, rhohat, u_floor=U_FLOOR):
    """Hessian through the moment maps:
    integral of sum_i (K_hat_i^2 dvol_rho - K_i^2 rhohat^2 / 2)."""
    rho, rhohat = np.asarray(rho), np.asarray(rhohat)
    u = ext.u_of(rho)
    k = k_functions(rho, u_floor)
    wr = np.stack([ext.wedge22(w, rhohat) for w in OMEGAS], axis=-1)
    khat = (wr - k * ext.wedge22(rho, rhohat)[..., None]) / u[..., None]
    dens = (np.sum(khat ** 2, axis=-1) * u
            - 0.5 * np.sum(k ** 2, axis=-1) * ext.wedge22(rhohat, rhohat))
    return lat.integrate(grid, dens)


def lie_derivative_k(grid, rho, x, u_floor=U_FLOOR):
    """L_X K_i = i(X) dK_i, shape (..., 3)."""
    k = k_functions(rho, u_floor)
    out = np.empty_like(k)
    for i in range(3):
        out[..., i] = ext.interior1(x, lat.d0(grid, k[..., i]))
    return out


def _nabla(grid, y, x):
    """Flat covariant derivative of the vector field x along y."""
    dx = np.stack([lat.d0(grid, x[..., a]) for a in range(4)], axis=-1)
    # dx[..., c, a] = partial_c x^a
    return np.einsum("...c,...ca->...a", y, dx)


def _omega_pair(i, x, y):
    """omega_i(x, y) pointwise for the constant triple."""
    return np.einsum("...a,ab,...b->...", x, _P_OMEGAS[i], y)


def hessiancov_check(grid, rho, rhohat, mu=None, u_floor=U_FLOOR):
    """Covariant-Hessian bookkeeping at (rho, rhohat).

    Evaluates the five integrals

        A = -1/2 int sum K_i^2 rhohat ^ rhohat
        B = int sum (i(X_Ki) omega_i) ^ (i(X) rho) ^ rhohat
        C = int sum omega_i(X, [X_Ki, X]) dvol_rho
        D = int sum (L_X K_i)^2 dvol_rho
        E = int sum H_hat_i (L_X K_i) dvol_rho

    whose ledger A + B + C + D = 2E holds in the continuum, together with
    both sides of the covariant-Hessian identity.  The Lie bracket uses the
    convention [Y, Z] = nabla_Z Y - nabla_Y Z and X solves i(X) rho = -mu
    with d mu = rhohat.  Returns a report dict.
    """
    rho, rhohat = np.asarray(rho), np.asarray(rhohat)
    if mu is None:
        res, mu = lat.exactness_residual(grid, rhohat)
        if res > 1e-10:
            raise lat.NotExact(f"rhohat not exact (residual {res:.3e})")
    u = ext.u_of(rho)
    k = k_functions(rho, u_floor)
    x = vector_from_potential(rho, mu, u_floor)
    khat, hhat = khat_hhat(grid, rho, rhohat, x, u_floor)
    lxk = lie_derivative_k(grid, rho, x, u_floor)

    xk = [hamiltonian_field(rho, k[..., i], grid, u_floor) for i in range(3)]
    ixrho = ext.interior2(x, rho)
    rr = ext.wedge22(rhohat, rhohat)

    a_val = lat.integrate(grid, -0.5 * np.sum(k ** 2, axis=-1) * rr)
    b_val = 0.0
    c_val = 0.0
    d_val = lat.integrate(grid, np.sum(lxk ** 2, axis=-1) * u)
    e_val = lat.integrate(grid, np.sum(hhat * lxk, axis=-1) * u)
    nab_kx = 0.0   # sum_i omega_i(X, nabla_{X_Ki} X) dvol_rho
    nab_xk = 0.0   # sum_i omega_i(X, nabla_X X_Ki) dvol_rho
    for i in range(3):
        ixkw = ext.interior2(xk[i], np.broadcast_to(OMEGAS[i], rho.shape))
        b_val += lat.integrate(
            grid, ext.wedge22(ext.wedge11(ixkw, ixrho), rhohat))
        bracket = _nabla(grid, x, xk[i]) - _nabla(grid, xk[i], x)
        c_val += lat.integrate(grid, _omega_pair(i, x, bracket) * u)
        nab_kx += lat.integrate(grid, _omega_pair(i, x, _nabla(grid, xk[i], x)) * u)
        nab_xk += lat.integrate(grid, _omega_pair(i, x, _nabla(grid, x, xk[i])) * u)

    hh = lat.integrate(grid, np.sum(hhat ** 2, axis=-1) * u)
    kk = lat.integrate(grid, np.sum(khat ** 2, axis=-1) * u - 0.5 * np.sum(k ** 2, axis=-1) * rr)
    abcde = a_val + b_val + c_val + d_val - 2.0 * e_val
    scale = sum(abs(v) for v in (a_val, b_val, c_val, d_val, 2 * e_val)) + 1e-300
    cov_lhs = hh + nab_kx
    cov_rhs = kk + b_val + nab_xk
    return {
        "A": a_val, "B": b_val, "C": c_val, "D": d_val, "E": e_val,
        "abcde_residual": abs(abcde),
        "abcde_relative": abs(abcde) / max(scale, 1e-14),
        "cov_lhs": cov_lhs,
        "cov_rhs": cov_rhs,
        "cov_residual": abs(cov_lhs - cov_rhs) / (abs(cov_lhs) + abs(cov_rhs) + 1e-14),
        "grid_n": grid.n,
        "scheme": grid.scheme,
    }
