"""Pointwise exterior algebra and metric geometry of an oriented R^4.

Every operation here acts on a single tangent space; all functions broadcast
over arbitrary leading axes so that lattice fields (shape ``(n,n,n,n,...)``)
go through the same code path as single points.

Component conventions (frozen; the rest of the package depends on them):

* vectors / 1-forms: 4 components in the coordinate basis ``d0..d3`` /
  ``e0..e3``.
* 2-forms: 6 components ordered ``(c01, c02, c03, c23, c31, c12)`` for the
  basis ``(e0^e1, e0^e2, e0^e3, e2^e3, e3^e1, e1^e2)``.  With this ordering
  the volume ratio of a 2-form is the sign-free sum of products
  ``u = c01*c23 + c02*c31 + c03*c12``.
* 3-forms: 4 components for the basis ``(e123, e023, e013, e012)``.
* 4-forms: one coefficient, multiple of ``e0^e1^e2^e3`` (the orientation).
* metrics: symmetric positive definite 4x4 matrices, orientation fixed so
  that ``e0^e1^e2^e3 > 0``.

All sign tables below were derived once from the permutation signs of the
bases above and are frozen here; the test suite re-derives them from a
brute-force permutation oracle.
"""

from __future__ import annotations

import numpy as np

U_FLOOR = 1e-10  # 2-forms with volume ratio u below this are treated as degenerate


class DegenerateForm(ValueError):
    """A 2-form failed a nondegeneracy precondition (u or Pfaffian too small)."""


class NonPositiveMetric(ValueError):
    """A symmetric matrix handed in as a metric is not positive definite."""


class NotPositivePlane(ValueError):
    """A triple of 2-forms does not span a positive definite wedge Gram matrix."""


# index pairs of the 2-form basis and index triples of the 3-form basis
IDX2 = ((0, 1), (0, 2), (0, 3), (2, 3), (3, 1), (1, 2))
IDX3 = ((1, 2, 3), (0, 2, 3), (0, 1, 3), (0, 1, 2))

# wedge-dual pairing on 2-forms: E_I ^ E_{DUAL2[I]} = +dvol, all other pairs 0
DUAL2 = (3, 4, 5, 0, 1, 2)

# e_i ^ f_i = W13_SIGN[i] * dvol  (f_i the i-th 3-form basis element)
W13_SIGN = np.array([1.0, -1.0, 1.0, -1.0])

EUCLID = np.eye(4)

# standard self-dual basis omega_i = e0^ei + ej^ek (i,j,k cyclic) and the
# anti-self-dual partners
OMEGA1 = np.array([1.0, 0.0, 0.0, 1.0, 0.0, 0.0])
OMEGA2 = np.array([0.0, 1.0, 0.0, 0.0, 1.0, 0.0])
OMEGA3 = np.array([0.0, 0.0, 1.0, 0.0, 0.0, 1.0])
OMEGA1_ASD = np.array([1.0, 0.0, 0.0, -1.0, 0.0, 0.0])
OMEGA2_ASD = np.array([0.0, 1.0, 0.0, 0.0, -1.0, 0.0])
OMEGA3_ASD = np.array([0.0, 0.0, 1.0, 0.0, 0.0, -1.0])


# ---------------------------------------------------------------------------
# wedge and interior products
# ---------------------------------------------------------------------------

def wedge11(a, b):
    """Wedge of two 1-forms, as a 2-form."""
    a, b = np.asarray(a), np.asarray(b)
    return np.stack([
        a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0],
        a[..., 0] * b[..., 2] - a[..., 2] * b[..., 0],
        a[..., 0] * b[..., 3] - a[..., 3] * b[..., 0],
        a[..., 2] * b[..., 3] - a[..., 3] * b[..., 2],
        a[..., 3] * b[..., 1] - a[..., 1] * b[..., 3],
        a[..., 1] * b[..., 2] - a[..., 2] * b[..., 1],
    ], axis=-1)


def wedge12(l, w):
    """Wedge of a 1-form with a 2-form, as a 3-form."""
    l, w = np.asarray(l), np.asarray(w)
    l0, l1, l2, l3 = (l[..., i] for i in range(4))
    w01, w02, w03, w23, w31, w12 = (w[..., i] for i in range(6))
    return np.stack([
        l1 * w23 + l2 * w31 + l3 * w12,
        l0 * w23 - l2 * w03 + l3 * w02,
        -l0 * w31 - l1 * w03 + l3 * w01,
        l0 * w12 - l1 * w02 + l2 * w01,
    ], axis=-1)


def wedge13(l, f):
    """Wedge of a 1-form with a 3-form: coefficient of the output 4-form."""
    l, f = np.asarray(l), np.asarray(f)
    return np.einsum("...i,i,...i->...", l, W13_SIGN, f)


def wedge22(a, b):
    """Wedge of two 2-forms: coefficient of the output 4-form."""
    a, b = np.asarray(a), np.asarray(b)
    return np.einsum("...i,...i->...", a, b[..., DUAL2])


def interior1(v, l):
    """Contraction of a 1-form with a vector (a scalar)."""
    return np.einsum("...i,...i->...", np.asarray(v), np.asarray(l))


def interior2(v, w):
    """Contraction of a 2-form with a vector, as a 1-form."""
    v, w = np.asarray(v), np.asarray(w)
    v0, v1, v2, v3 = (v[..., i] for i in range(4))
    w01, w02, w03, w23, w31, w12 = (w[..., i] for i in range(6))
    return np.stack([
        -v1 * w01 - v2 * w02 - v3 * w03,
        v0 * w01 - v2 * w12 + v3 * w31,
        v0 * w02 + v1 * w12 - v3 * w23,
        v0 * w03 - v1 * w31 + v2 * w23,
    ], axis=-1)


def interior3(v, f):
    """Contraction of a 3-form with a vector, as a 2-form."""
    v, f = np.asarray(v), np.asarray(f)
    v0, v1, v2, v3 = (v[..., i] for i in range(4))
    f0, f1, f2, f3 = (f[..., i] for i in range(4))
    return np.stack([
        v2 * f3 + v3 * f2,
        -v1 * f3 + v3 * f1,
        -v1 * f2 - v2 * f1,
        v0 * f1 + v1 * f0,
        -v0 * f2 + v2 * f0,
        v0 * f3 + v3 * f0,
    ], axis=-1)


def interior4(v, c):
    """Contraction of a 4-form coefficient with a vector, as a 3-form."""
    v, c = np.asarray(v), np.asarray(c)
    return W13_SIGN * v * c[..., None]


# ---------------------------------------------------------------------------
# 2-forms as antisymmetric matrices
# ---------------------------------------------------------------------------

def form2_matrix(w):
    """Antisymmetric matrix P with P[i,j] = w(d_i, d_j)."""
    w = np.asarray(w)
    z = np.zeros_like(w[..., 0])
    w01, w02, w03, w23, w31, w12 = (w[..., i] for i in range(6))
    rows = [
        np.stack([z, w01, w02, w03], axis=-1),
        np.stack([-w01, z, w12, -w31], axis=-1),
        np.stack([-w02, -w12, z, w23], axis=-1),
        np.stack([-w03, w31, -w23, z], axis=-1),
    ]
    return np.stack(rows, axis=-2)


def matrix_form2(p):
    """Inverse of :func:`form2_matrix` (no antisymmetry check)."""
    p = np.asarray(p)
    return np.stack([p[..., 0, 1], p[..., 0, 2], p[..., 0, 3],
                     p[..., 2, 3], p[..., 3, 1], p[..., 1, 2]], axis=-1)


def pfaffian(w):
    """Pfaffian of the component matrix: c01*c23 + c02*c31 + c03*c12."""
    w = np.asarray(w)
    return (w[..., 0] * w[..., 3] + w[..., 1] * w[..., 4]
            + w[..., 2] * w[..., 5])


def form2_matrix_inv(w, pf=None):
    """Inverse of the component matrix of a nondegenerate 2-form.

    Uses the 4d identity P(w) @ P(dual w) = -pf(w) * Id, so no LU solve is
    needed; ``pf`` may be passed if already computed.
    """
    w = np.asarray(w)
    if pf is None:
        pf = pfaffian(w)
    return -form2_matrix(w[..., DUAL2]) / pf[..., None, None]


# ---------------------------------------------------------------------------
# metrics and Hodge stars
# ---------------------------------------------------------------------------

def make_metric(mat, tol=1e-12):
    """Validate and symmetrize a metric matrix.

    Raises NonPositiveMetric unless every instance is symmetric positive
    definite (checked through leading principal minors).
    """
    mat = np.asarray(mat, dtype=float)
    if mat.shape[-2:] != (4, 4):
        raise NonPositiveMetric(f"expected trailing 4x4 matrix, got {mat.shape}")
    sym = 0.5 * (mat + np.swapaxes(mat, -1, -2))
    if not np.allclose(mat, sym, rtol=0, atol=tol * (1 + np.abs(mat).max())):
        raise NonPositiveMetric("metric matrix is not symmetric")
    for k in range(1, 5):
        minors = np.linalg.det(sym[..., :k, :k])
        if np.any(minors <= 0):
            raise NonPositiveMetric(f"leading {k}x{k} minor is not positive")
    return sym


def vol_coeff(g):
    """Coefficient of the volume form dvol_g (orientation e0123 > 0)."""
    det = np.linalg.det(np.asarray(g))
    if np.any(det <= 0):
        raise NonPositiveMetric(
            f"metric determinant is not positive (min {det.min():.3e})")
    return np.sqrt(det)


def _gram2(m):
    """6x6 Gram matrix of the 2-form basis induced by a bilinear form m."""
    m = np.asarray(m)
    i1 = np.array([p[0] for p in IDX2])
    i2 = np.array([p[1] for p in IDX2])
    a = m[..., i1[:, None], i1[None, :]] * m[..., i2[:, None], i2[None, :]]
    b = m[..., i1[:, None], i2[None, :]] * m[..., i2[:, None], i1[None, :]]
    return a - b


def metric2(g):
    """Inner product matrix on 2-forms induced by the metric g."""
    return _gram2(np.linalg.inv(np.asarray(g)))


def norm2_sq(w, g=None):
    """Squared metric norm of a 2-form (Euclidean metric when g is None)."""
    w = np.asarray(w)
    if g is None:
        return np.einsum("...i,...i->...", w, w)
    g2 = metric2(g)
    return np.einsum("...i,...ij,...j->...", w, g2, w)


def hodge0(g, c):
    """Hodge star of a 0-form (scalar) as a 4-form coefficient."""
    return np.asarray(c) * vol_coeff(g)


def hodge1(g, l):
    """Hodge star of a 1-form, as a 3-form."""
    g = np.asarray(g)
    y = np.einsum("...ij,...j->...i", np.linalg.inv(g), np.asarray(l))
    return vol_coeff(g)[..., None] * W13_SIGN * y


def hodge2(g, w):
    """Hodge star of a 2-form, as a 2-form.

    Defined through a ^ (star b) = <a, b>_g dvol_g; for the Euclidean metric
    this swaps the (c01,c02,c03) and (c23,c31,c12) triples.
    """
    g = np.asarray(g)
    y = np.einsum("...ij,...j->...i", metric2(g), np.asarray(w))
    return vol_coeff(g)[..., None] * y[..., DUAL2]


def hodge3(g, f):
    """Hodge star of a 3-form, as a 1-form (inverse of hodge1 up to sign)."""
    g = np.asarray(g)
    y = W13_SIGN * np.asarray(f)
    return -np.einsum("...ij,...j->...i", g, y) / vol_coeff(g)[..., None]


def hodge4(g, c):
    """Hodge star of a 4-form coefficient (a scalar)."""
    return np.asarray(c) / vol_coeff(g)


def star1_flat(l):
    return W13_SIGN * np.asarray(l)


def star2_flat(w):
    return np.asarray(w)[..., DUAL2]


def star3_flat(f):
    return -W13_SIGN * np.asarray(f)


def sd_split(w, g=None):
    """Self-dual / anti-self-dual split w = w_plus + w_minus."""
    w = np.asarray(w)
    sw = star2_flat(w) if g is None else hodge2(g, w)
    return 0.5 * (w + sw), 0.5 * (w - sw)


def hodge2_matrix(g):
    """The Hodge star on 2-forms as an explicit (..., 6, 6) matrix."""
    g = np.asarray(g)
    g2 = metric2(g)
    return vol_coeff(g)[..., None, None] * g2[..., DUAL2, :]


def self_dual_basis(g):
    """Wedge-orthonormal basis of the self-dual 2-forms of g.

    Returns shape (..., 3, 6) with basis_a ^ basis_b = 2 delta_ab dvol_g.
    """
    g = np.asarray(g)
    star = hodge2_matrix(g)
    proj = 0.5 * (np.eye(6) + star)
    uu, ss, _ = np.linalg.svd(proj)
    if np.any(np.sum(ss > 0.5, axis=-1) != 3):
        raise NonPositiveMetric("self-dual projector does not have rank 3")
    cols = np.swapaxes(uu[..., :, :3], -1, -2)     # (..., 3, 6)
    vol = vol_coeff(g)
    w1, w2, w3 = _wedge_gram_schmidt(cols, vol)
    return np.stack([w1, w2, w3], axis=-2)


# ---------------------------------------------------------------------------
# the rho-dependent geometry
# ---------------------------------------------------------------------------

def u_of(rho, g=None):
    """Volume ratio u = (rho ^ rho) / (2 dvol_g).  May be <= 0."""
    u = pfaffian(np.asarray(rho))
    if g is None:
        return u
    return u / vol_coeff(g)


def a_of(rho, g=None):
    """Linear map A with g(A v, w) = rho(v, w); det A = u^2.

    In column-vector convention A = G^{-1} P^T with P the component matrix,
    so for rho = omega1 and the Euclidean metric A is the standard complex
    structure (A d0 = d1, A d2 = d3, squares to -1).
    """
    p = form2_matrix(np.asarray(rho))
    pt = np.swapaxes(p, -1, -2)
    if g is None:
        return pt
    return np.linalg.solve(np.broadcast_to(np.asarray(g), pt.shape), pt)


def _require_u(u, floor=U_FLOOR):
    if np.any(u <= floor):
        bad = np.argwhere(np.atleast_1d(u) <= floor)
        first = tuple(int(i) for i in bad[0])
        raise DegenerateForm(
            f"volume ratio u <= {floor:g} at {bad.shape[0]} point(s), "
            f"first index {first}, u_min = {np.min(u):.3e}")


def g_rho(rho, g=None, u_floor=U_FLOOR):
    """The unique metric with the volume form of g whose self-dual forms are
    the R^rho image of the self-dual forms of g.

    Computed as g_rho(v, w) = u^{-1} g(Av, Aw); requires u > u_floor.
    """
    rho = np.asarray(rho)
    u = u_of(rho, g)
    _require_u(u, u_floor)
    a = a_of(rho, g)
    if g is None:
        gram = np.einsum("...ki,...kj->...ij", a, a)
    else:
        gram = np.einsum("...ki,...kl,...lj->...ij", a, np.asarray(g), a)
    return gram / u[..., None, None]


def r_rho(w, rho, u_floor=U_FLOOR):
    """Wedge-preserving involution R w = w - (w^rho / dvol_rho) rho.

    Sends rho to -rho and fixes the wedge-orthogonal complement of rho.
    Metric independent; requires rho ^ rho != 0.
    """
    w, rho = np.asarray(w), np.asarray(rho)
    pf = pfaffian(rho)
    if np.any(np.abs(pf) <= u_floor):
        raise DegenerateForm("rho ^ rho vanishes: R^rho undefined")
    coeff = wedge22(w, rho) / pf
    return w - coeff[..., None] * rho


def star_rho1(l, rho, g=None, u_floor=U_FLOOR):
    """rho-twisted Hodge star on 1-forms: rho ^ star(rho ^ l) / u.

    Agrees with the Hodge star of g_rho(rho, g).
    """
    rho = np.asarray(rho)
    u = u_of(rho, g)
    _require_u(u, u_floor)
    inner = star3_flat(wedge12(l, rho)) if g is None else hodge3(g, wedge12(l, rho))
    return wedge12(inner, rho) / u[..., None]


def star_rho2(w, rho, g=None, u_floor=U_FLOOR):
    """rho-twisted Hodge star on 2-forms: R star R, an involution."""
    rho = np.asarray(rho)
    u = u_of(rho, g)
    _require_u(u, u_floor)
    rw = r_rho(w, rho, u_floor)
    srw = star2_flat(rw) if g is None else hodge2(g, rw)
    return r_rho(srw, rho, u_floor)


def star_rho3(f, rho, g=None, u_floor=U_FLOOR):
    """rho-twisted Hodge star on 3-forms, via the metric g_rho.

    Satisfies star_rho3(star_rho1(l)) = -l.
    """
    gm = g_rho(rho, g, u_floor)
    return hodge3(gm, f) if g is not None else _hodge3_unit_vol(gm, f)


def _hodge3_unit_vol(gm, f):
    # hodge3 for a metric known to have unit volume (saves the det)
    y = W13_SIGN * np.asarray(f)
    return -np.einsum("...ij,...j->...i", gm, y)


def theta_point(rho, g=None, u_floor=U_FLOOR):
    """The 2-form Theta = star(rho/u) - (|rho/u|^2 / 2) rho.

    Wedge-orthogonal to rho; vanishes exactly when rho is self-dual.
    """
    rho = np.asarray(rho)
    u = u_of(rho, g)
    _require_u(u, u_floor)
    srho = star2_flat(rho) if g is None else hodge2(g, rho)
    n2 = norm2_sq(rho, g)
    return srho / u[..., None] - (0.5 * n2 / u ** 2)[..., None] * rho


def theta_dot_point(rho, rhohat, g=None, u_floor=U_FLOOR):
    """Directional derivative of theta_point at rho in direction rhohat:

        (rhohat + star_rho rhohat) / u - |rho^+ / u|^2 rhohat.
    """
    rho, rhohat = np.asarray(rho), np.asarray(rhohat)
    u = u_of(rho, g)
    _require_u(u, u_floor)
    plus, _ = sd_split(rho, g)
    srh = star_rho2(rhohat, rho, g, u_floor)
    coeff = norm2_sq(plus, g) / u ** 2
    return (rhohat + srh) / u[..., None] - coeff[..., None] * rhohat


def j_rho(jmap, rho, u_floor=U_FLOOR):
    """The unique linear map M with rho(M v, w) = rho(v, J w).

    M = (P J P^{-1})^T for P the component matrix of rho.
    """
    rho = np.asarray(rho)
    pf = pfaffian(rho)
    if np.any(np.abs(pf) <= u_floor):
        raise DegenerateForm("rho degenerate: J^rho undefined")
    p = form2_matrix(rho)
    pinv = form2_matrix_inv(rho, pf)
    m = p @ np.asarray(jmap) @ pinv
    return np.swapaxes(m, -1, -2)


def quaternion_triple(w1, w2, w3, u_floor=U_FLOOR):
    """Solve the cyclic relations w2(., J3 .) = w1, w3(., J1 .) = w2,
    w1(., J2 .) = w3 for the three linear maps (J1, J2, J3).

    When the inputs wedge-pairwise vanish and share a common square the
    outputs satisfy the quaternion relations Ji^2 = -1, Jj Jk = -Jk Jj = Ji.
    """
    ps = [form2_matrix(np.asarray(w)) for w in (w1, w2, w3)]
    for w in (w1, w2, w3):
        if np.any(np.abs(pfaffian(np.asarray(w))) <= u_floor):
            raise DegenerateForm("degenerate 2-form in quaternion triple")
    j1 = np.linalg.solve(ps[2], ps[1])
    j2 = np.linalg.solve(ps[0], ps[2])
    j3 = np.linalg.solve(ps[1], ps[0])
    return j1, j2, j3


def _wedge_gram_schmidt(basis, vol, pivot_tol=1e-10):
    """Orthonormalize three 2-forms to w_i ^ w_j = 2 delta_ij vol."""
    out = []
    for a in range(3):
        w = np.asarray(basis[..., a, :], dtype=float).copy()
        for b in range(a):
            coeff = wedge22(w, out[b]) / (2.0 * vol)
            w = w - coeff[..., None] * out[b]
        sq = wedge22(w, w) / (2.0 * vol)
        if np.any(sq <= pivot_tol):
            raise NotPositivePlane(
                f"wedge Gram pivot {a} fell below {pivot_tol:g}")
        out.append(w / np.sqrt(sq)[..., None])
    return out


def metric_from_vol_and_plane(vol, basis, pivot_tol=1e-10, probe_tol=1e-8):
    """Reconstruct the unique metric with volume form ``vol`` whose self-dual
    2-forms are spanned by ``basis``.

    Parameters
    ----------
    vol : array (...,)
        Positive coefficient of the target volume form.
    basis : array (..., 3, 6)
        Three 2-forms spanning a positive subspace: their wedge Gram matrix
        divided by ``vol`` must be positive definite.

    Returns
    -------
    array (..., 4, 4), the metric matrix.  Postconditions: its volume
    coefficient equals ``vol`` and each basis element is self-dual for it.
    """
    vol = np.asarray(vol, dtype=float)
    basis = np.asarray(basis, dtype=float)
    if np.any(vol <= 0):
        raise NotPositivePlane("volume form must be positive")
    gram = np.stack([np.stack([wedge22(basis[..., a, :], basis[..., b, :])
                               for b in range(3)], axis=-1)
                     for a in range(3)], axis=-2) / vol[..., None, None]
    for k in range(1, 4):
        if np.any(np.linalg.det(gram[..., :k, :k]) <= 0):
            raise NotPositivePlane("wedge Gram matrix is not positive definite")

    w1, w2, w3 = _wedge_gram_schmidt(basis, vol, pivot_tol)
    j1, _, _ = quaternion_triple(w1, w2, w3)

    # fix the overall sign at the first probe basis vector where the
    # candidate quadratic form w1(v, J1 v) is safely nonzero
    p1 = form2_matrix(w1)
    cand = p1 @ j1                       # bilinear form w1(., J1 .)
    diag = np.stack([cand[..., i, i] for i in range(4)], axis=-1)
    usable = np.abs(diag) > probe_tol
    if not np.all(np.any(usable, axis=-1)):
        raise DegenerateForm("no probe vector separates the metric sign")
    first = np.argmax(usable, axis=-1)
    probe_val = np.take_along_axis(diag, first[..., None], axis=-1)[..., 0]
    sign = np.where(probe_val > 0, 1.0, -1.0)

    gm = sign[..., None, None] * cand
    return 0.5 * (gm + np.swapaxes(gm, -1, -2))
