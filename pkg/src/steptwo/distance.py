"""Carnot-Caratheodory distance from the identity by inverting the exponential map.

On the injectivity domain the distance of an endpoint is the Euclidean norm of
the horizontal covector, d(exp(zeta, tau)) = |zeta|, so distances are computed
by recovering the covector:

* Heisenberg / H-type tuples reduce by symmetry to one scalar equation,

      |t| / |x|^2 = (2 theta - sin 2 theta) / (8 sin^2 theta),  theta in (0, pi),

  solved by safeguarded bisection + Newton; then |zeta| = |x| theta / sin theta
  and tau = 2 theta t/|t|.  Points with x = 0 are reached in the limit
  theta -> pi, giving d = sqrt(4 pi |t|) (method "boundary-limit").

* Other tuples (the three-generator free group, custom input) are inverted by
  a damped multistart Gauss-Newton iteration on exp(eta) = g, batched across
  samples and starts; the minimal |zeta| among converged starts wins.

Accepted results carry the homogeneous-norm residual of exp(preimage) against
the target; near-cut-locus solutions (smallest singular value of d exp below
1e-8) are flagged by method "boundary-limit" and a widened residual tolerance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, ScanError, UnresolvedDistanceError
from .geodesics import Covector, _exp_xt, _jacobian_batch
from .groups import GroupPoint, homogeneous_norm, inverse, multiply
from .util import sub_rng

RESIDUAL_TOL = 1e-6
CUT_RESIDUAL_TOL = 1e-4


@dataclass(frozen=True)
class DistanceResult:
    distance: float
    preimage: Covector | None
    residual: float
    method: str      # closed-reduction | multistart-solve | boundary-limit

    def to_jsonable(self):
        pre = None
        if self.preimage is not None:
            pre = {"zeta": self.preimage.zeta.tolist(), "tau": self.preimage.tau.tolist()}
        return {"distance": self.distance, "preimage": pre,
                "residual": self.residual, "method": self.method}


@dataclass
class BatchDistance:
    """Vectorized solver output; row i describes sample i."""

    distance: np.ndarray
    zeta: np.ndarray
    tau: np.ndarray
    residual: np.ndarray
    ok: np.ndarray          # residual within tolerance
    has_preimage: np.ndarray
    cut: np.ndarray         # near the cut locus / boundary-limit rows
    n_failed: int = 0

    def method_of(self, i, closed):
        if not self.has_preimage[i] or self.cut[i]:
            return "boundary-limit"
        return "closed-reduction" if closed else "multistart-solve"


def _mu(theta):
    """|t|/|x|^2 as a function of theta on (0, pi); strictly increasing."""
    s = np.sin(theta)
    return (2.0 * theta - np.sin(2.0 * theta)) / (8.0 * s * s)


def _solve_mu(ratio):
    """Invert _mu by bisection (54 steps) plus two Newton polish steps."""
    ratio = np.asarray(ratio, dtype=float)
    lo = np.full(ratio.shape, 1e-300)
    hi = np.full(ratio.shape, np.pi - 1e-16)
    for _ in range(54):
        mid = 0.5 * (lo + hi)
        take_hi = _mu(mid) < ratio
        lo = np.where(take_hi, mid, lo)
        hi = np.where(take_hi, hi, mid)
    th = 0.5 * (lo + hi)
    for _ in range(2):
        s, c = np.sin(th), np.cos(th)
        dmu = 0.5 - (2.0 * th - np.sin(2.0 * th)) * c / (4.0 * s ** 3)
        step = (_mu(th) - ratio) / dmu
        th = np.clip(th - step, 1e-300, np.pi - 1e-16)
    return th


def _invert_htype(spec, X, T):
    """Closed inversion for H-type tuples; X (B,q), T (B,m)."""
    B = X.shape[0]
    r = np.linalg.norm(X, axis=1)
    u = np.linalg.norm(T, axis=1)
    dist = np.zeros(B)
    Zc = np.zeros_like(X)
    Tc = np.zeros_like(T)
    has_pre = np.ones(B, dtype=bool)
    cut = np.zeros(B, dtype=bool)

    axis = r <= 1e-12 * np.maximum(1.0, np.sqrt(u))
    straight = (~axis) & (u <= 1e-14 * np.maximum(1.0, r ** 2))
    generic = ~(axis | straight)

    # t = 0: straight horizontal line.
    dist[straight] = r[straight]
    Zc[straight] = X[straight]

    # x = 0: vertical axis, theta -> pi limit.
    vert = axis & (u > 0)
    dist[vert] = np.sqrt(4.0 * np.pi * u[vert])
    has_pre[axis] = False
    cut[vert] = True

    if np.any(generic):
        rg, ug = r[generic], u[generic]
        th = _solve_mu(ug / rg ** 2)
        zn = rg * th / np.sin(th)
        c = 2.0 * th
        that = T[generic] / ug[:, None]
        tau = c[:, None] * that
        a = np.sin(c) / c
        b = (1.0 - np.cos(c)) / c ** 2
        Om_x = np.einsum("jkl,bj,bl->bk", spec.U, tau, X[generic])
        A2 = (np.sin(th) / th) ** 2
        Zc[generic] = (a[:, None] * X[generic] - b[:, None] * Om_x) / A2[:, None]
        Tc[generic] = tau
        dist[generic] = zn
        cut[generic] = th > np.pi - 1e-6

    # Homogeneous-norm mismatch of exp(preimage) against the target.
    residual = np.zeros(B)
    if np.any(has_pre):
        xe, te = _exp_xt(spec, Zc[has_pre], Tc[has_pre])
        mism = multiply(spec, inverse(spec, GroupPoint(xe, te)),
                        GroupPoint(X[has_pre], T[has_pre]))
        residual[has_pre] = homogeneous_norm(spec, mism)
    tol = np.where(cut, CUT_RESIDUAL_TOL, RESIDUAL_TOL) * np.maximum(1.0, dist)
    ok = np.where(has_pre, residual <= tol, True)
    return BatchDistance(distance=dist, zeta=Zc, tau=Tc, residual=residual,
                         ok=ok, has_preimage=has_pre, cut=cut)


# Fixed direction table for multistart seeding (deterministic, sample count
# independent): unit vectors drawn once from a fixed stream.
_SEED_DIRS = sub_rng(0x5EED, 0).standard_normal((32, 8))


def _horizontal_inverse_seed(spec, tau, X):
    """Given tau guesses, solve the horizontal part A(tau) zeta = x for zeta.

    A(tau) = int_0^1 e^{u Omega} du is assembled column by column from q
    evaluations of the (fast) endpoint map with basis covectors; the solve is
    regularized so parabolic tau guesses (|tau| near 2 pi k) stay usable.
    """
    B, S = tau.shape[:2]
    q = spec.q
    basis = np.broadcast_to(np.eye(q), (B, S, q, q)).reshape(-1, q)
    taus = np.repeat(tau.reshape(-1, spec.m), q, axis=0)
    cols, _ = _exp_xt(spec, basis, taus)
    A = cols.reshape(B, S, q, q).swapaxes(-1, -2)     # columns A e_k
    AtA = A.swapaxes(-1, -2) @ A
    AtA += 1e-12 * np.eye(q)
    rhs = np.einsum("bskq,bq->bsk", A, X)
    return np.linalg.solve(AtA, rhs[..., None])[..., 0]


def _multistart_seeds(spec, X, T, n_starts):
    """Seed covectors (B, S, q+m) built from per-sample geometry.

    Seed 0 is the straight-line guess (x, 0); the rest pair a tau guess
    (directions mixing t-hat with fixed table directions, magnitudes spread
    around the scalar-reduction value c0) with the exact horizontal inverse
    for that tau.
    """
    B = X.shape[0]
    q, m = spec.q, spec.m
    r = np.linalg.norm(X, axis=1)
    u = np.linalg.norm(T, axis=1)
    d_est = np.sqrt(r ** 2 + 4.0 * np.pi * u)
    that = np.where(u[:, None] > 0, T / np.maximum(u, 1e-300)[:, None], 0.0)

    # Heisenberg-style magnitude guess from the scalar reduction.
    ratio = u / np.maximum(r, 1e-300) ** 2
    th0 = _solve_mu(np.clip(ratio, 0.0, 1e12))
    c0 = np.maximum(2.0 * th0, 0.05)

    n_tau = n_starts - 1
    tau_seeds = np.zeros((B, n_tau, m))
    if spec.is_cross:
        # For the cross tuple every preimage satisfies det[x, t, tau] = 0,
        # so tau lies in span{x, t}; seed over that half-plane only.
        u1 = np.where(r[:, None] > 1e-12, X / np.maximum(r, 1e-300)[:, None],
                      np.array([1.0, 0.0, 0.0]))
        tperp = T - np.sum(T * u1, axis=1)[:, None] * u1
        tp = np.linalg.norm(tperp, axis=1)
        fallback = np.cross(u1, np.array([0.0, 0.0, 1.0]))
        fb_norm = np.linalg.norm(fallback, axis=1)
        weak = fb_norm < 1e-6
        fallback[weak] = np.cross(u1[weak], np.array([0.0, 1.0, 0.0]))
        fallback /= np.linalg.norm(fallback, axis=1)[:, None]
        u2 = np.where(tp[:, None] > 1e-12 * np.maximum(1.0, u)[:, None],
                      tperp / np.maximum(tp, 1e-300)[:, None], fallback)
        angles = np.deg2rad([90.0, 45.0, 135.0, 20.0, 160.0, 70.0, 110.0, -15.0, 195.0])
        mags = (1.0, 0.6, 1.5, 2.2)
        for k in range(n_tau):
            phi = angles[k % len(angles)]
            mag = mags[(k // len(angles)) % len(mags)]
            tdir = np.cos(phi) * u1 + np.sin(phi) * u2
            tau_seeds[:, k] = (c0 * mag)[:, None] * tdir
    else:
        mags = (1.0, 0.55, 1.5, 2.3, 0.25)
        for k in range(n_tau):
            mix = _SEED_DIRS[k % len(_SEED_DIRS)][:m]
            w = 0.5 * (k // len(mags))
            tdir = that + w * mix[None, :]
            tnorm = np.linalg.norm(tdir, axis=1, keepdims=True)
            tdir = np.where(tnorm > 1e-12, tdir / np.maximum(tnorm, 1e-300),
                            mix[None, :] / np.linalg.norm(mix))
            tau_seeds[:, k] = (c0 * mags[k % len(mags)])[:, None] * tdir

    seeds = np.zeros((B, n_starts, q + m))
    seeds[:, 0, :q] = X
    seeds[:, 1:, q:] = tau_seeds
    seeds[:, 1:, :q] = _horizontal_inverse_seed(spec, tau_seeds, X)
    # keep seeds from starting absurdly long
    zn = np.linalg.norm(seeds[..., :q], axis=-1)
    cap = 4.0 * np.maximum(d_est, 1e-6)[:, None]
    scale = np.where(zn > cap, cap / np.maximum(zn, 1e-300), 1.0)
    seeds[..., :q] *= scale[..., None]
    return seeds


def _fd_jacobian_of_exp(spec, eta, h=1e-6):
    """Plain central-difference Jacobian matrices for Newton; eta (..., n)."""
    n = spec.q + spec.m
    step = h * np.maximum(1.0, np.linalg.norm(eta, axis=-1))[..., None, None]
    pert = step * np.eye(n)
    plus = eta[..., None, :] + pert
    minus = eta[..., None, :] - pert
    both = np.concatenate([plus, minus], axis=-2).reshape(-1, n)
    x, t = _exp_xt(spec, both[:, : spec.q], both[:, spec.q:])
    vals = np.concatenate([x, t], axis=1).reshape(eta.shape[:-1] + (2, n, n))
    J = (vals[..., 0, :, :] - vals[..., 1, :, :]) / (2.0 * step)
    return J.swapaxes(-1, -2)


def _invert_multistart(spec, X, T, n_starts=16, max_iter=60, extra_eta=None):
    """Damped Gauss-Newton on exp(eta) = g from `n_starts` seeds per sample.

    `extra_eta` (B, q+m) appends one known covector per sample as an extra
    start (used by the domain certificate, which must decide whether a given
    preimage is the minimal one).
    """
    B = X.shape[0]
    q, m = spec.q, spec.m
    n = q + m
    target = np.concatenate([X, T], axis=1)[:, None, :]        # (B,1,n)
    gn = np.maximum(1.0, np.linalg.norm(target, axis=-1))      # (B,1)
    eta = _multistart_seeds(spec, X, T, n_starts)              # (B,S,n)
    if extra_eta is not None:
        eta = np.concatenate([eta, extra_eta[:, None, :]], axis=1)
        n_starts = n_starts + 1

    def resid(e):
        flat = e.reshape(-1, n)
        x, t = _exp_xt(spec, flat[:, :q], flat[:, q:])
        return np.concatenate([x, t], axis=1).reshape(e.shape) - target

    F = resid(eta)
    fn = np.linalg.norm(F, axis=-1)

    def gauss_newton_phase(alive, tol, iters, fd_step):
        for _ in range(iters):
            active = alive & (fn > tol)
            if not np.any(active):
                break
            idx = np.where(active)
            J = _fd_jacobian_of_exp(spec, eta[idx], h=fd_step)
            JT = J.swapaxes(-1, -2)
            H = JT @ J
            H += 1e-14 * np.einsum("...ii->...", H)[..., None, None] * np.eye(n)
            g_vec = np.einsum("...ij,...j->...i", JT, F[idx])
            try:
                delta = -np.linalg.solve(H, g_vec[..., None])[..., 0]
            except np.linalg.LinAlgError:
                delta = -np.einsum("...ij,...j->...i", np.linalg.pinv(H), g_vec)

            # Vectorized Armijo backtracking over a fixed alpha ladder.
            alphas = np.array([1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125])
            cand = eta[idx][:, None, :] + alphas[None, :, None] * delta[:, None, :]
            xs, ts = _exp_xt(spec, cand.reshape(-1, n)[:, :q],
                             cand.reshape(-1, n)[:, q:])
            vals = np.concatenate([xs, ts], axis=1).reshape(len(idx[0]), len(alphas), n)
            Fc = vals - target[idx[0], 0][:, None, :]
            fc = np.linalg.norm(Fc, axis=-1)
            accept = fc <= (1.0 - 1e-4 * alphas)[None, :] * fn[idx][:, None]
            first = np.argmax(accept, axis=1)
            any_ok = accept[np.arange(len(first)), first]
            best = np.argmin(fc, axis=1)
            pick = np.where(any_ok, first, best)
            improved = fc[np.arange(len(pick)), pick] < fn[idx]
            eta[idx] = np.where(improved[:, None], cand[np.arange(len(pick)), pick], eta[idx])
            F[idx] = np.where(improved[:, None], Fc[np.arange(len(pick)), pick], F[idx])
            fn[idx] = np.where(improved, fc[np.arange(len(pick)), pick], fn[idx])
            # starts that cannot improve are dropped
            alive[idx] = improved | (fn[idx] <= tol[idx])

    # Main descent, then a tight polish of near-converged starts with a
    # smaller difference step (the homogeneous-norm residual takes a square
    # root of the flat t-mismatch, so the flat residual must reach ~1e-13).
    gauss_newton_phase(np.ones((B, n_starts), dtype=bool),
                       np.broadcast_to(1e-11 * gn, fn.shape), max_iter, 1e-6)
    near = fn <= 1e-5 * gn
    gauss_newton_phase(near.copy(), np.broadcast_to(1e-13 * gn, fn.shape), 6, 2e-7)

    conv = fn <= 1e-9 * gn
    zeta_norm = np.linalg.norm(eta[..., :q], axis=-1)
    zeta_norm = np.where(conv, zeta_norm, np.inf)
    pick = np.argmin(zeta_norm, axis=1)
    rows = np.arange(B)
    got = np.isfinite(zeta_norm[rows, pick])
    best_eta = eta[rows, pick]

    dist = np.where(got, np.linalg.norm(best_eta[:, :q], axis=1), np.nan)
    Zc = best_eta[:, :q]
    Tc = best_eta[:, q:]

    residual = np.full(B, np.inf)
    if np.any(got):
        xe, te = _exp_xt(spec, Zc[got], Tc[got])
        mism = multiply(spec, inverse(spec, GroupPoint(xe, te)),
                        GroupPoint(X[got], T[got]))
        residual[got] = homogeneous_norm(spec, mism)

    cut = np.zeros(B, dtype=bool)
    if np.any(got):
        Jb = _fd_jacobian_of_exp(spec, best_eta[got])
        smin = np.linalg.svd(Jb, compute_uv=False)[..., -1]
        cut[got] = smin < 1e-8
    tol_acc = np.where(cut, CUT_RESIDUAL_TOL, RESIDUAL_TOL) * np.maximum(1.0, dist)
    ok = got & (residual <= tol_acc)
    return BatchDistance(distance=dist, zeta=Zc, tau=Tc, residual=residual,
                         ok=ok, has_preimage=got, cut=cut,
                         n_failed=int(B - np.count_nonzero(got)))


def _apply_exp_omega(spec, T, v):
    """e^{Omega_tau} v for batched tau (B,m), v (B,q)."""
    if spec.is_cross:
        c = np.linalg.norm(T, axis=-1)
        n = np.where(c[..., None] > 0, T / np.where(c > 0, c, 1.0)[..., None], 0.0)
        # Omega = -[tau]_x, so this is the rotation by -c about n.
        nv = np.cross(n, v)
        nnv = np.cross(n, nv)
        return v - np.sin(c)[..., None] * nv + (1.0 - np.cos(c))[..., None] * nnv
    if spec.is_htype:
        c = np.linalg.norm(T, axis=-1)
        Ov = np.einsum("jkl,...j,...l->...k", spec.U, T, v)
        sinc_c = np.sin(c) / np.where(c > 0, c, 1.0)
        return np.cos(c)[..., None] * v + sinc_c[..., None] * Ov
    Omega = np.einsum("...j,jkl->...kl", T, spec.U)
    w, V = np.linalg.eigh(1j * Omega)
    vt = np.einsum("...kq,...k->...q", V.conj(), v)
    return np.einsum("...qk,...k->...q", V, np.exp(-1j * w) * vt).real


def _reversal_preimage(spec, Z, T):
    """Map a preimage of g to a preimage of g^{-1} (and vice versa)."""
    return -_apply_exp_omega(spec, T, Z), -T


def cc_distance_batch(spec, g, n_starts=None, extra_eta=None):
    """Distances from the identity for a batch of points g (leading dim).

    Non-H-type points are inverted twice, for g and for g^{-1} (whose
    preimages correspond under the geodesic reversal identity); the shorter
    branch wins.  This halves the odds of missing the minimal branch and
    enforces the inversion symmetry of the distance.
    """
    if n_starts is None:
        n_starts = 20 if spec.is_cross else 16
    X = np.atleast_2d(g.x)
    T = np.atleast_2d(g.t)
    hn = np.sqrt(np.sum(X ** 2, axis=1) + np.linalg.norm(T, axis=1))
    trivial = hn <= 1e-12
    if spec.is_htype:
        out = _invert_htype(spec, X, T)
    else:
        out = _invert_multistart(spec, X, T, n_starts=n_starts, extra_eta=extra_eta)
        back_extra = None
        if extra_eta is not None:
            bz, bt = _reversal_preimage(spec, extra_eta[:, :spec.q], extra_eta[:, spec.q:])
            back_extra = np.concatenate([bz, bt], axis=1)
        back = _invert_multistart(spec, -X, -T, n_starts=n_starts, extra_eta=back_extra)
        if np.any(back.has_preimage):
            bz, bt = _reversal_preimage(spec, back.zeta, back.tau)
            use = back.has_preimage & (~out.has_preimage
                                       | (back.distance < out.distance * (1.0 - 1e-12)))
            if np.any(use):
                xe, te = _exp_xt(spec, bz[use], bt[use])
                mism = multiply(spec, inverse(spec, GroupPoint(xe, te)),
                                GroupPoint(X[use], T[use]))
                res_mapped = homogeneous_norm(spec, mism)
                out.zeta[use] = bz[use]
                out.tau[use] = bt[use]
                out.distance[use] = back.distance[use]
                out.residual[use] = res_mapped
                out.has_preimage[use] = True
                out.cut[use] = back.cut[use]
                tol_acc = np.where(out.cut[use], CUT_RESIDUAL_TOL, RESIDUAL_TOL) \
                    * np.maximum(1.0, out.distance[use])
                out.ok[use] = res_mapped <= tol_acc
            out.n_failed = int(np.count_nonzero(~out.has_preimage))
    out.distance[trivial] = 0.0
    out.zeta[trivial] = 0.0
    out.tau[trivial] = 0.0
    out.residual[trivial] = 0.0
    out.ok[trivial] = True
    out.has_preimage[trivial] = True
    return out


def certify_preimage(spec, zeta, tau, rtol=1e-6, n_starts=None):
    """Numerical domain certificate for a batch of covectors.

    Each covector is fed to the multistart solver as an extra start for its
    own endpoint; it is certified iff the solver recovers a preimage with
    residual below `rtol` and no start reaches a strictly smaller |zeta|.
    Returns (certified mask, BatchDistance).
    """
    Z = np.atleast_2d(np.asarray(zeta, dtype=float))
    T = np.atleast_2d(np.asarray(tau, dtype=float))
    x, t = _exp_xt(spec, Z, T)
    eta = np.concatenate([Z, T], axis=1)
    out = cc_distance_batch(spec, GroupPoint(x, t), n_starts=n_starts, extra_eta=eta)
    zn = np.linalg.norm(Z, axis=1)
    ok = (out.has_preimage
          & (out.residual <= rtol * np.maximum(1.0, out.distance))
          & (zn <= out.distance * (1.0 + rtol) + 1e-12)
          & (zn > 0))
    return ok, out


def cc_distance(spec, g, n_starts=None):
    """Carnot-Caratheodory distance d(g, o) with preimage and residual."""
    if g.batch_shape:
        raise InputError("cc_distance takes a single point; use cc_distance_batch")
    batch = cc_distance_batch(spec, GroupPoint(g.x[None], g.t[None]), n_starts=n_starts)
    if not batch.has_preimage[0] and not batch.ok[0]:
        raise UnresolvedDistanceError("no multistart branch converged",
                                      x=g.x, t=g.t,
                                      best_residual=float(batch.residual[0]))
    if batch.has_preimage[0] and not batch.ok[0]:
        raise UnresolvedDistanceError("preimage residual above tolerance",
                                      x=g.x, t=g.t,
                                      best_residual=float(batch.residual[0]))
    pre = None
    if batch.has_preimage[0]:
        pre = Covector(batch.zeta[0], batch.tau[0])
    return DistanceResult(distance=float(batch.distance[0]), preimage=pre,
                          residual=float(batch.residual[0]),
                          method=batch.method_of(0, closed=spec.is_htype))


def norm_equivalence_scan(spec, n_samples, seed=0, box=3.0, max_skip_frac=0.05):
    """Empirical band of d(g)^2 / (|x|^2 + |t|) over a uniform box sample.

    Returns (c_low, c_high).  Unresolved distances are skipped and counted;
    more than `max_skip_frac` skips aborts the scan.
    """
    if n_samples < 100:
        raise InputError("need at least 100 samples")
    rng = sub_rng(seed, 1)
    X = rng.uniform(-box, box, size=(n_samples, spec.q))
    T = rng.uniform(-box, box, size=(n_samples, spec.m))
    out = cc_distance_batch(spec, GroupPoint(X, T))
    good = out.ok & (out.distance > 0)
    n_skip = int(n_samples - np.count_nonzero(good))
    if n_skip > max_skip_frac * n_samples:
        raise ScanError(f"{n_skip}/{n_samples} samples unresolved", n_skipped=n_skip)
    hn2 = np.sum(X[good] ** 2, axis=1) + np.linalg.norm(T[good], axis=1)
    ratio = out.distance[good] ** 2 / hn2
    return float(np.min(ratio)), float(np.max(ratio))


@dataclass(frozen=True)
class VolumeEstimate:
    value: float
    stderr: float
    n_samples: int
    n_skipped: int
    box_volume: float

    def to_jsonable(self):
        return {"value": self.value, "stderr": self.stderr,
                "n_samples": self.n_samples, "n_skipped": self.n_skipped,
                "box_volume": self.box_volume}


def ball_volume_estimate(spec, r, n_samples, seed=0, max_skip_frac=0.05):
    """Monte Carlo volume of the ball {d < r} by rejection in a covering box.

    For H-type tuples the box {|x_i| <= r, |t_j| <= r^2/(4 pi)} covers the
    ball exactly (d >= |x| and the vertical extreme is the boundary-limit
    point).  Otherwise the box is sized from a preliminary norm-equivalence
    scan with a factor-2 safety margin.
    """
    if r <= 0:
        raise InputError("radius must be positive")
    if n_samples < 10_000:
        raise InputError("need at least 1e4 samples")
    if spec.is_htype:
        ax = r
        at = r ** 2 / (4.0 * np.pi)
    else:
        c_low, _ = norm_equivalence_scan(spec, 2000, seed=seed + 97)
        c_low *= 0.5
        ax = r / np.sqrt(c_low)
        at = r ** 2 / c_low
    rng = sub_rng(seed, 2)
    X = rng.uniform(-ax, ax, size=(n_samples, spec.q))
    T = rng.uniform(-at, at, size=(n_samples, spec.m))
    out = cc_distance_batch(spec, GroupPoint(X, T))
    valid = out.ok
    n_skip = int(n_samples - np.count_nonzero(valid))
    if n_skip > max_skip_frac * n_samples:
        raise ScanError(f"{n_skip}/{n_samples} samples unresolved", n_skipped=n_skip)
    inside = valid & (out.distance < r)
    n_valid = int(np.count_nonzero(valid))
    p = np.count_nonzero(inside) / n_valid
    box_vol = (2.0 * ax) ** spec.q * (2.0 * at) ** spec.m
    return VolumeEstimate(value=float(box_vol * p),
                          stderr=float(box_vol * np.sqrt(p * (1 - p) / n_valid)),
                          n_samples=n_valid, n_skipped=n_skip,
                          box_volume=float(box_vol))
