"""Periodic k-form fields on the unit four-torus.

Fields are plain numpy arrays over an n^4 lattice in lexicographic
``(x0, x1, x2, x3)`` order (x0 slowest), with a trailing component axis of
size 1/4/6/4/1 for degrees 0..4 in the component conventions of
:mod:`donflow.exterior`.  Scalars and 4-forms drop the trailing axis.

Two derivative schemes share every code path downstream:

* ``spectral`` -- Fourier multipliers ``2 pi i k`` (Nyquist mode zeroed so
  odd derivatives of real fields stay real and antisymmetric),
* ``fd2`` -- second order central differences via periodic rolls.

Both have translation invariant symbols, so d o d = 0 to round-off and the
per-component mean of any derivative vanishes identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from donflow.exterior import W13_SIGN

SCHEMES = ("spectral", "fd2")

FORM_COMPS = {0: 1, 1: 4, 2: 6, 3: 4, 4: 1}


class NotExact(ValueError):
    """A 2-form field handed in as exact fails the image-of-d validation."""


class NoConvergence(RuntimeError):
    """The conjugate gradient solve exceeded its iteration budget."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice on [0,1)^4 with a derivative scheme."""

    n: int
    scheme: str = "spectral"

    def __post_init__(self):
        if self.n < 4 or self.n % 2:
            raise ValueError(f"grid size must be even and >= 4, got {self.n}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}, want one of {SCHEMES}")

    @property
    def h(self):
        return 1.0 / self.n

    @property
    def shape(self):
        return (self.n,) * 4

    @cached_property
    def freq(self):
        """Integer frequencies along one axis (fft order)."""
        return np.fft.fftfreq(self.n) * self.n

    @cached_property
    def symbol(self):
        """Imaginary part b of the derivative symbol i*b along one axis."""
        k = self.freq
        if self.scheme == "spectral":
            b = 2 * np.pi * k
        else:
            b = np.sin(2 * np.pi * k / self.n) * self.n
        # the central-difference stencil kills the alternating mode exactly;
        # for spectral derivatives of real fields the odd Nyquist part is
        # dropped for the same reason
        b[np.abs(k) == self.n // 2] = 0.0
        return b

    def axis_symbol(self, axis):
        """Symbol of d/dx_axis shaped to broadcast over the lattice."""
        shape = [1, 1, 1, 1]
        shape[axis] = self.n
        return self.symbol.reshape(shape)

    @cached_property
    def laplace_symbol(self):
        """Nonnegative symbol of -laplacian, shape (n,n,n,n)."""
        return sum(self.axis_symbol(ax) ** 2 for ax in range(4))

    def coords(self):
        """Coordinate arrays x0..x3, each broadcastable to the lattice."""
        x = np.arange(self.n) / self.n
        return [x.reshape([self.n if ax == i else 1 for i in range(4)])
                for ax in range(4)]

    def zeros(self, k):
        c = FORM_COMPS[k]
        return np.zeros(self.shape if c == 1 else self.shape + (c,))

    def constant(self, comps):
        """Constant 2-form field with the given six components."""
        out = np.empty(self.shape + (6,))
        out[:] = np.asarray(comps, dtype=float)
        return out


def partial(grid, f, axis):
    """Periodic partial derivative along a lattice axis.

    The last axis of ``f`` may be a component axis; ``axis`` always counts
    the four lattice directions.
    """
    f = np.asarray(f)
    if grid.scheme == "fd2":
        return (np.roll(f, -1, axis) - np.roll(f, 1, axis)) * (0.5 * grid.n)
    sym = grid.axis_symbol(axis)
    if f.ndim == 5:
        sym = sym[..., None]
    fk = np.fft.fft(f, axis=axis)
    return np.fft.ifft(1j * sym * fk, axis=axis).real


def _partials(grid, f):
    """All four axis derivatives of a (component) field, batched."""
    return [partial(grid, f, ax) for ax in range(4)]


def d0(grid, f):
    """Exterior derivative of a 0-form, as a 1-form field."""
    return np.stack(_partials(grid, f), axis=-1)


def d1(grid, lam):
    """Exterior derivative of a 1-form, as a 2-form field."""
    dl = _partials(grid, lam)      # dl[i][..., j] = partial_i lam_j
    return np.stack([
        dl[0][..., 1] - dl[1][..., 0],
        dl[0][..., 2] - dl[2][..., 0],
        dl[0][..., 3] - dl[3][..., 0],
        dl[2][..., 3] - dl[3][..., 2],
        dl[3][..., 1] - dl[1][..., 3],
        dl[1][..., 2] - dl[2][..., 1],
    ], axis=-1)


def d2(grid, w):
    """Exterior derivative of a 2-form, as a 3-form field."""
    dw = _partials(grid, w)        # dw[i][..., J] = partial_i w_J
    return np.stack([
        dw[1][..., 3] + dw[2][..., 4] + dw[3][..., 5],
        dw[0][..., 3] - dw[2][..., 2] + dw[3][..., 1],
        -dw[0][..., 4] - dw[1][..., 2] + dw[3][..., 0],
        dw[0][..., 5] - dw[1][..., 1] + dw[2][..., 0],
    ], axis=-1)


def d3(grid, f):
    """Exterior derivative of a 3-form, as a 4-form coefficient field."""
    return sum(W13_SIGN[i] * partial(grid, f[..., i], i) for i in range(4))


def d(grid, fld, k):
    """Exterior derivative of a degree-k field."""
    return (d0, d1, d2, d3)[k](grid, fld)


def delta2(grid, w):
    """Formal adjoint of d1 in the flat component L2 pairing."""
    dw = _partials(grid, w)
    return np.stack([
        dw[1][..., 0] + dw[2][..., 1] + dw[3][..., 2],
        -dw[0][..., 0] + dw[2][..., 5] - dw[3][..., 4],
        -dw[0][..., 1] - dw[1][..., 5] + dw[3][..., 3],
        -dw[0][..., 2] + dw[1][..., 4] - dw[2][..., 3],
    ], axis=-1)


def fft4(f):
    return np.fft.fftn(np.asarray(f), axes=(0, 1, 2, 3))


def ifft4(fk):
    return np.fft.ifftn(fk, axes=(0, 1, 2, 3)).real


def inv_laplace(grid, f):
    """Inverse of the (scheme) Laplacian, zero on its kernel modes."""
    f = np.asarray(f)
    sym = grid.laplace_symbol
    if f.ndim == 5:
        sym = sym[..., None]
    fk = fft4(f)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(sym > 0, fk / sym, 0.0)
    return ifft4(out)


def harmonic_projection(grid, f):
    """Project onto the discrete-harmonic modes (all derivative symbols zero).

    For either scheme these are the Fourier modes with every k_i in
    {0, n/2}; they span the kernel of d on each degree, with the constants
    as the k = 0 member.
    """
    f = np.asarray(f)
    mask1d = grid.axis_symbol(0).ravel() == 0.0
    mask = (mask1d.reshape(-1, 1, 1, 1) & mask1d.reshape(1, -1, 1, 1)
            & mask1d.reshape(1, 1, -1, 1) & mask1d.reshape(1, 1, 1, -1))
    if f.ndim == 5:
        mask = mask[..., None]
    return ifft4(np.where(mask, fft4(f), 0.0))


def dealias(grid, f):
    """Two-thirds rule truncation of a field's spectrum."""
    f = np.asarray(f)
    keep1d = np.abs(grid.freq) <= grid.n / 3.0
    mask = (keep1d.reshape(-1, 1, 1, 1) & keep1d.reshape(1, -1, 1, 1)
            & keep1d.reshape(1, 1, -1, 1) & keep1d.reshape(1, 1, 1, -1))
    if f.ndim == 5:
        mask = mask[..., None]
    return ifft4(np.where(mask, fft4(f), 0.0))


def integrate(grid, f4):
    """Integral of a 4-form field: h^4 times a pairwise component sum."""
    return float(np.sum(f4)) * grid.h ** 4


def l2_norm(grid, fld):
    """Flat L2 norm of a component field."""
    return math.sqrt(float(np.sum(np.asarray(fld) ** 2)) * grid.h ** 4)


def cohomology(grid, rho):
    """Per-component grid means of a 2-form field (exactly rounded sums)."""
    nsites = grid.n ** 4
    return np.array([math.fsum(rho[..., c].ravel()) / nsites for c in range(6)])


def exact_potential_flat(grid, rhohat):
    """Flat-metric potential lam0 with d lam0 = rhohat for exact rhohat.

    lam0 = delta (laplace^-1 rhohat); d lam0 reproduces rhohat exactly when
    rhohat lies in the image of d (the residual is the distance to it).
    """
    return delta2(grid, inv_laplace(grid, rhohat))


def exactness_residual(grid, rhohat):
    """Relative L2 distance of a 2-form field from the image of d."""
    lam0 = exact_potential_flat(grid, rhohat)
    num = l2_norm(grid, d1(grid, lam0) - rhohat)
    den = l2_norm(grid, rhohat)
    return 0.0 if den == 0 else num / den, lam0


def _star1_apply(gdata, lam):
    """Pointwise rho-metric Hodge star on 1-form fields."""
    ginv, s = gdata
    y = np.einsum("...ij,...j->...i", ginv, lam)
    return s[..., None] * W13_SIGN * y


def least_norm_potential(grid, rhohat, metric_field, rtol=1e-10,
                         max_iter=None, validate_tol=1e-10):
    """Gauge-fixed potential of an exact 2-form field.

    Returns the 1-form lam minimizing the metric energy
    ``integral(lam ^ star lam)`` over all solutions of ``d lam = rhohat``,
    where ``star`` is the pointwise Hodge star of ``metric_field``.  The
    minimizer is the potential whose ``star lam`` is exact (closed with zero
    periods).

    Parameters
    ----------
    rhohat : (n,n,n,n,6) array
        Must lie in the image of d up to ``validate_tol`` (relative L2).
    metric_field : (n,n,n,n,4,4) array
        Pointwise symmetric positive definite metric.
    rtol : float
        Relative residual target of the preconditioned CG solve.
    max_iter : int
        Iteration budget, default ``50 * n``.

    Raises
    ------
    NotExact, NoConvergence
    """
    res, lam0 = exactness_residual(grid, rhohat)
    if res > validate_tol:
        raise NotExact(f"projection residual {res:.3e} exceeds {validate_tol:g}")
    if max_iter is None:
        max_iter = 50 * grid.n

    gmat = np.asarray(metric_field)
    gdata = (np.linalg.inv(gmat), np.sqrt(np.linalg.det(gmat)))

    # the closed corrections are d(phi) plus the discrete-harmonic 1-forms
    # nu (constants and the zero-symbol Nyquist combinations); nu iterates
    # live inside that subspace throughout
    def apply_b(phi, nu):
        return d0(grid, phi) + nu

    def apply_bt(w3):
        # transpose of apply_b through the wedge pairing with 3-forms
        wf = W13_SIGN * w3
        out_phi = -sum(partial(grid, wf[..., i], i) for i in range(4))
        out_nu = harmonic_projection(grid, wf)
        return out_phi, out_nu

    def normal_op(phi, nu):
        return apply_bt(_star1_apply(gdata, apply_b(phi, nu)))

    def precond(r_phi, r_nu):
        return inv_laplace(grid, r_phi), r_nu

    b_phi, b_nu = apply_bt(_star1_apply(gdata, lam0))
    r_phi, r_nu = -b_phi, -b_nu
    phi = np.zeros(grid.shape)
    nu = np.zeros(grid.shape + (4,))
    z_phi, z_nu = precond(r_phi, r_nu)
    p_phi, p_nu = z_phi.copy(), z_nu.copy()
    rz = float(np.sum(r_phi * z_phi) + np.sum(r_nu * z_nu))
    r0 = math.sqrt(float(np.sum(r_phi ** 2) + np.sum(r_nu ** 2)))
    # sqrt(r' M^-1 r) is in potential units and can be compared against the
    # particular solution's own scale; this terminates cleanly when the
    # initial residual is pure round-off (lam0 already gauge-fixed)
    lam_scale = math.sqrt(float(np.sum(lam0 ** 2))) + 1e-300

    def converged(rnorm, rz_val):
        return (rnorm <= rtol * r0
                or math.sqrt(max(rz_val, 0.0)) <= rtol * lam_scale)

    if r0 == 0.0 or converged(r0, rz):
        return lam0

    rnorm = r0
    for _ in range(max_iter):
        q_phi, q_nu = normal_op(p_phi, p_nu)
        alpha = rz / float(np.sum(p_phi * q_phi) + np.sum(p_nu * q_nu))
        phi += alpha * p_phi
        nu += alpha * p_nu
        r_phi -= alpha * q_phi
        r_nu -= alpha * q_nu
        rnorm = math.sqrt(float(np.sum(r_phi ** 2) + np.sum(r_nu ** 2)))
        z_phi, z_nu = precond(r_phi, r_nu)
        rz_new = float(np.sum(r_phi * z_phi) + np.sum(r_nu * z_nu))
        if converged(rnorm, rz_new):
            return lam0 + apply_b(phi, nu)
        beta = rz_new / rz
        rz = rz_new
        p_phi = z_phi + beta * p_phi
        p_nu = z_nu + beta * p_nu
    raise NoConvergence(
        f"CG stalled at relative residual {rnorm / r0:.3e} after {max_iter} steps")


def random_trig_field(rng, kmax, ncomp=1):
    """Random real trigonometric polynomial with modes |k_i| <= kmax, zero mean.

    Returns a closure evaluating the field on any grid, so refinement studies
    can sample the same smooth function at several resolutions.
    """
    modes = []
    for kv in np.ndindex(*(2 * kmax + 1,) * 4):
        k = np.array(kv) - kmax
        if not k.any():
            continue
        nz = k[np.nonzero(k)[0][0]]
        if nz < 0:       # one representative per antipodal pair
            continue
        modes.append(k)
    amps = rng.normal(size=(len(modes), ncomp))
    phases = rng.uniform(0, 2 * np.pi, size=(len(modes), ncomp))

    def evaluate(grid):
        xs = grid.coords()
        out = np.zeros(grid.shape + (ncomp,))
        for k, a, ph in zip(modes, amps, phases):
            arg = 2 * np.pi * sum(int(k[i]) * xs[i] for i in range(4))
            out += a * np.cos(arg[..., None] + ph)
        return out if ncomp > 1 else out[..., 0]

    return evaluate
