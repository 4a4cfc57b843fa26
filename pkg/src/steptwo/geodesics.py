"""Sub-Riemannian exponential map based at the identity, and its Jacobian.

A normal geodesic with initial covector eta = (zeta, tau) solves

    xdot(s) = e^{s Omega} zeta,          Omega = sum_j tau_j U^(j),
    tdot_j(s) = 1/2 <U^(j) x(s), xdot(s)>,      x(0) = 0, t(0) = 0,

and ``exp_map`` returns the endpoint (x(1), t(1)).  The horizontal part has
the closed form x(s) = Omega^{-1}(e^{s Omega} - I) zeta, evaluated spectrally
(Omega is skew, so i*Omega is Hermitian); the vertical part is integrated by
a Gauss-Legendre rule whose order grows with the rotation phase |s tau|, so
the result is exact to machine precision for the phases that occur here.

H-type tuples admit fully closed forms (Omega^2 = -|tau|^2 I):

    x(s) = sin(sc)/c zeta + (1 - cos(sc))/c^2 Omega zeta,      c = |tau|,
    t(s) = tau |zeta|^2 (sc - sin(sc)) / (2 c^3).

Jacobian determinants of exp are computed by central finite differences with
one Richardson refinement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalFailure
from .groups import GroupPoint, _check_dims

_GL_CACHE = {}


def _gauss_legendre(n):
    if n not in _GL_CACHE:
        _GL_CACHE[n] = np.polynomial.legendre.leggauss(n)
    return _GL_CACHE[n]


@dataclass(frozen=True)
class Covector:
    """Initial covector eta = (zeta, tau) at the identity; theta = tau / 2."""

    zeta: np.ndarray
    tau: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "zeta", np.asarray(self.zeta, dtype=float))
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))

    @property
    def theta(self):
        return 0.5 * self.tau

    @property
    def zeta_norm(self):
        return np.linalg.norm(self.zeta, axis=-1)

    @property
    def batch_shape(self):
        return self.zeta.shape[:-1]

    def scaled(self, s):
        s = np.asarray(s, dtype=float)
        sz = s[..., None] if s.ndim else s
        return Covector(sz * self.zeta, sz * self.tau)

    def __getitem__(self, idx):
        return Covector(self.zeta[idx], self.tau[idx])


@dataclass(frozen=True)
class GeodesicResult:
    endpoint: GroupPoint
    jacobian: float
    in_domain: bool
    length: float

    def to_jsonable(self):
        return {
            "endpoint": {"x": self.endpoint.x.tolist(), "t": self.endpoint.t.tolist()},
            "jacobian": self.jacobian,
            "in_domain": self.in_domain,
            "length": self.length,
        }


def _sin_over(z):
    """sin(z)/z, stable at 0 (complex-safe for analytic continuation)."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    return np.where(small, 1.0 - z * z / 6.0, np.sin(zs) / zs)


def _versine_over_sq(z):
    """(1 - cos z)/z^2, stable at 0."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-4
    zs = np.where(small, 1.0, z)
    return np.where(small, 0.5 - z * z / 24.0, (1.0 - np.cos(zs)) / zs ** 2)


def _zsin_over_cube(z):
    """(z - sin z)/z^3, stable at 0."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    direct = (zs - np.sin(zs)) / zs ** 3
    z2 = z * z
    series = 1.0 / 6.0 - z2 / 120.0 + z2 * z2 / 5040.0
    return np.where(small, series, direct)


def _exp_xt_htype(spec, Z, T, s):
    """Closed-form endpoint for H-type tuples; Z (B,q), T (B,m), s (B,) or scalar.

    Complex-safe: with complex inputs this is the analytic continuation
    (sums of squares instead of norms), enabling complex-step derivatives.
    """
    c = np.sqrt(np.sum(T * T, axis=-1))
    sc = s * c
    OmZ = np.einsum("jkl,...j,...l->...k", spec.U, T, Z)
    x = (s * _sin_over(sc))[..., None] * Z + (s * s * _versine_over_sq(sc))[..., None] * OmZ
    zn2 = np.sum(Z * Z, axis=-1)
    t = (0.5 * zn2 * s ** 3 * _zsin_over_cube(sc))[..., None] * T
    return x, t


def _phi_profile(u, omega):
    """int_0^u e^{i v omega} dv = sin(u w)/w + i (1 - cos(u w))/w, elementwise."""
    z = u * omega
    return u * _sin_over(z) + 1j * (u * z * _versine_over_sq(z))


def _g1(z):
    """(sin z - z)/z^2, stable at 0."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, -z / 6.0 + z * z2 / 120.0, (np.sin(zs) - zs) / zs ** 2)


def _g2(z):
    """(2 sin z - z cos z - z)/z^2, stable at 0."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, z / 6.0 - z * z2 / 40.0,
                    (2.0 * np.sin(zs) - zs * np.cos(zs) - zs) / zs ** 2)


def _g3(z):
    """(2 cos z + z sin z - 2)/z^2, stable at 0."""
    z = np.asarray(z)
    small = np.abs(z) < 1e-2
    zs = np.where(small, 1.0, z)
    z2 = z * z
    return np.where(small, -z2 / 12.0 + z2 * z2 / 180.0,
                    (2.0 * np.cos(zs) + zs * np.sin(zs) - 2.0) / zs ** 2)


def _exp_xt_cross(spec, Z, T, s):
    """Closed-form endpoint for the cross-product tuple (q = m = 3).

    Decompose zeta = p n + w with n = tau/|tau|, w | n, v = n x w.  Then with
    z = s|tau|,

        x(s) = s p n + s sinc(z) w - s z vers(z) v,
        t(s) = -s^2/2 [ |w|^2 g1(z) n + p g2(z) w + p g3(z) v ],

    where vers(z) = (1-cos z)/z^2 and g1, g2, g3 are the helpers above.
    """
    c = np.sqrt(np.sum(T * T, axis=-1))
    nonzero = np.abs(c) > 0
    safe = np.where(nonzero, c, 1.0)
    n = np.where(nonzero[..., None], T / safe[..., None], 0.0 * T)
    p = np.sum(Z * n, axis=-1)
    w = Z - p[..., None] * n
    v = np.cross(n, w)
    z = s * c
    x = (s * p)[..., None] * n + (s * _sin_over(z))[..., None] * w \
        - (s * z * _versine_over_sq(z))[..., None] * v
    wn2 = np.sum(w * w, axis=-1)
    t = np.asarray(-0.5 * s * s)[..., None] * (wn2[..., None] * _g1(z)[..., None] * n
                                               + (p * _g2(z))[..., None] * w
                                               + (p * _g3(z))[..., None] * v)
    return x, t


def _exp_xt_generic(spec, Z, T, s):
    """Spectral endpoint for a general skew tuple.  Shapes as in _exp_xt_htype."""
    Omega = np.einsum("...j,jkl->...kl", T, spec.U)
    w, V = np.linalg.eigh(1j * Omega)      # Omega = V diag(-i w) V^H
    omega = -w
    zt = np.einsum("...kq,...k->...q", V.conj(), Z)

    s_arr = np.asarray(s, dtype=float)
    s_col = s_arr[..., None] if s_arr.ndim else s_arr
    x = np.einsum("...qk,...k->...q", V, _phi_profile(s_col, omega) * zt).real

    # Vertical part: Gauss-Legendre in u over [0, s].  Integrand frequencies
    # are bounded by 2 max|omega| s, so the node count below keeps the rule
    # exact to machine precision.
    cmax = float(np.max(np.abs(omega * s_col), initial=0.0))
    K = 33 + int(2.0 * cmax)
    nodes, weights = _gauss_legendre(K)
    half = 0.5 * s_arr
    u = (nodes + 1.0) * (half[..., None] if s_arr.ndim else half)    # (..., K)
    phase = np.exp(1j * u[..., None] * omega[..., None, :])          # (..., K, q)
    xk = np.einsum("...qk,...uk->...uq", V,
                   _phi_profile(u[..., None], omega[..., None, :]) * zt[..., None, :]).real
    dxk = np.einsum("...qk,...uk->...uq", V, phase * zt[..., None, :]).real
    integrand = np.einsum("jkl,...ul,...uk->...uj", spec.U, xk, dxk)
    wts = weights * (half[..., None] if s_arr.ndim else half)        # (..., K)
    t = 0.5 * np.einsum("...u,...uj->...j", wts, integrand)
    return x, t


def _exp_xt(spec, Z, T, s=1.0, chunk=None):
    """Endpoint arrays (x, t) for batched covectors Z (..., q), T (..., m)."""
    Z = np.asarray(Z, dtype=float)
    T = np.asarray(T, dtype=float)
    if spec.is_htype:
        return _exp_xt_htype(spec, Z, T, np.asarray(s, dtype=float))
    if spec.is_cross:
        return _exp_xt_cross(spec, Z, T, np.asarray(s, dtype=float))
    batch = Z.shape[:-1]
    Zf = Z.reshape(-1, spec.q)
    Tf = T.reshape(-1, spec.m)
    s_arr = np.asarray(s, dtype=float)
    sf = np.broadcast_to(s_arr, batch).reshape(-1) if s_arr.ndim else None
    B = Zf.shape[0]
    if chunk is None:
        chunk = max(256, 2_000_000 // (64 * spec.q))
    xs = np.empty((B, spec.q))
    ts = np.empty((B, spec.m))
    for lo in range(0, B, chunk):
        hi = min(lo + chunk, B)
        sc = sf[lo:hi] if sf is not None else float(s_arr)
        xs[lo:hi], ts[lo:hi] = _exp_xt_generic(spec, Zf[lo:hi], Tf[lo:hi], sc)
    return xs.reshape(batch + (spec.q,)), ts.reshape(batch + (spec.m,))


def exp_map(spec, eta):
    """Endpoint exp(eta) of the normal geodesic with initial covector eta."""
    _check_cov(spec, eta)
    x, t = _exp_xt(spec, eta.zeta, eta.tau)
    return GroupPoint(x, t)


def exp_scaled(spec, eta, s):
    """The s-intermediate point exp(s eta) = gamma(s), 0 < s <= 1."""
    _check_cov(spec, eta)
    s_arr = np.asarray(s, dtype=float)
    if np.any(s_arr <= 0) or np.any(s_arr > 1):
        raise InputError("scale s must lie in (0, 1]")
    x, t = _exp_xt(spec, eta.zeta, eta.tau, s_arr)
    return GroupPoint(x, t)


def _check_cov(spec, eta):
    if eta.zeta.shape[-1] != spec.q or eta.tau.shape[-1] != spec.m:
        raise InputError(
            f"covector dims ({eta.zeta.shape[-1]}, {eta.tau.shape[-1]}) do not "
            f"match spec ({spec.q}, {spec.m})"
        )


def _jacobian_batch(spec, Z, T):
    """Finite-difference det(d exp) for covectors stacked as Z (B,q), T (B,m).

    Central differences at steps h and h/2 with one Richardson extrapolation;
    h = max(1e-5, 1e-5 |eta|) per row.
    """
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    T = np.atleast_2d(np.asarray(T, dtype=float))
    B, n = Z.shape[0], spec.q + spec.m
    eta = np.concatenate([Z, T], axis=1)
    h = np.maximum(1e-5, 1e-5 * np.linalg.norm(eta, axis=1))

    # Stencil: (B, 2 steps, n coords, +/-) perturbed covectors.
    steps = np.stack([h, 0.5 * h], axis=1)                       # (B, 2)
    pert = steps[:, :, None, None] * np.eye(n)[None, None, :, :]  # (B,2,n,n)
    stencil = eta[:, None, None, None, :] + np.stack([pert, -pert], axis=3)
    flat = stencil.reshape(-1, n)
    x, t = _exp_xt(spec, flat[:, : spec.q], flat[:, spec.q:])
    vals = np.concatenate([x, t], axis=1).reshape(B, 2, n, 2, n)

    diff = (vals[:, :, :, 0, :] - vals[:, :, :, 1, :]) / (2.0 * steps)[:, :, None, None]
    D = diff.swapaxes(-1, -2)                                     # columns = d exp/d eta_i
    richardson = (4.0 * D[:, 1] - D[:, 0]) / 3.0
    return np.linalg.det(richardson)


def jacobian_exp(spec, eta):
    """det of the derivative of exp at eta, by central finite differences."""
    _check_cov(spec, eta)
    batch = eta.batch_shape
    dets = _jacobian_batch(spec, eta.zeta.reshape(-1, spec.q), eta.tau.reshape(-1, spec.m))
    if not np.all(np.isfinite(dets)) or np.any(dets == 0.0):
        raise NumericalFailure("singular or non-finite exp Jacobian",
                               zeta=eta.zeta, tau=eta.tau, dets=dets)
    return dets.reshape(batch) if batch else float(dets[0])


def _jacobian_cstep(spec, Z, T):
    """Machine-precision det(d exp) by complex-step differentiation.

    Available for the closed-form H-type and cross tuples, whose endpoint
    maps are analytic and implemented complex-safely; there is no
    subtractive cancellation, so the result stays accurate even where the
    Jacobian is many orders smaller than the covector scale.
    """
    if not (spec.is_htype or spec.is_cross):
        raise InputError("complex-step Jacobian needs a closed-form endpoint map")
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    T = np.atleast_2d(np.asarray(T, dtype=float))
    B, n = Z.shape[0], spec.q + spec.m
    eta = np.concatenate([Z, T], axis=1).astype(complex)
    h = 1e-200
    cols = np.empty((B, n, n))
    for i in range(n):
        e = eta.copy()
        e[:, i] += 1j * h
        if spec.is_htype:
            x, t = _exp_xt_htype(spec, e[:, : spec.q], e[:, spec.q:], 1.0)
        else:
            x, t = _exp_xt_cross(spec, e[:, : spec.q], e[:, spec.q:], 1.0)
        cols[:, :, i] = np.concatenate([x, t], axis=1).imag / h
    return np.linalg.det(cols)


def _jacobian_accurate(spec, Z, T):
    """Best available Jacobian: complex step where closed forms exist, else FD."""
    if spec.is_htype or spec.is_cross:
        return _jacobian_cstep(spec, Z, T)
    return _jacobian_batch(spec, Z, T)


def _jacobian_scaled_batch(spec, Z, T, s):
    """Jac(exp)(s eta) via the exact identity Jac(r zeta, tau) = r^{2m} Jac(zeta, tau).

    Writing Jac(s zeta, s tau) = s^{2m} Jac(zeta, s tau) keeps the
    differentiation at O(1) covectors, which is much better conditioned than
    differencing at the contracted point when s is small.
    """
    s = np.asarray(s, dtype=float)
    s_col = s[..., None] if s.ndim else s
    dets = _jacobian_accurate(spec, np.atleast_2d(Z), np.atleast_2d(s_col * T))
    return s ** (2 * spec.m) * dets


def scaling_jacobian_factor(q, m, s):
    """Jacobian determinant of the radial correction eta -> (1 - i|zeta|^-3) eta.

    With s = 1 - i |zeta|^-3 the determinant is s^(q+m-1) (3 - 2s); the
    second factor is 1 + 2 i |zeta|^-3 written in terms of s.
    """
    s = np.asarray(s, dtype=float)
    if np.any(s <= 0) or np.any(s > 1):
        raise InputError("scale s must lie in (0, 1]")
    out = s ** (q + m - 1) * (3.0 - 2.0 * s)
    return float(out) if out.ndim == 0 else out


def in_domain(spec, eta, rtol=1e-6):
    """Membership of eta in the injectivity domain D of exp.

    For Heisenberg/H-type tuples the domain is known:
    zeta != 0 and |tau| < 2 pi.  Otherwise a numerical certificate is used:
    invert exp(eta) with the multistart distance solver and accept iff the
    residual is below `rtol` and |zeta| equals the recovered distance.
    """
    _check_cov(spec, eta)
    zn = eta.zeta_norm
    if spec.is_htype:
        out = (zn > 0.0) & (np.linalg.norm(eta.tau, axis=-1) < 2.0 * np.pi)
        return out if eta.batch_shape else bool(out)
    from .distance import certify_preimage  # distance builds on this module

    ok, _ = certify_preimage(spec, eta.zeta.reshape(-1, spec.q),
                             eta.tau.reshape(-1, spec.m), rtol=rtol)
    return ok.reshape(eta.batch_shape) if eta.batch_shape else bool(ok[0])


def evaluate_geodesic(spec, eta):
    """Bundle endpoint, Jacobian, domain flag and length for one covector."""
    endpoint = exp_map(spec, eta)
    dom = in_domain(spec, eta)
    jac = jacobian_exp(spec, eta)
    return GeodesicResult(endpoint=endpoint, jacobian=float(jac),
                          in_domain=bool(dom), length=float(eta.zeta_norm))
