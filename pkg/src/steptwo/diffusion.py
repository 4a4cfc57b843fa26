"""Horizontal Brownian motion and Monte Carlo heat-semigroup estimates.

The generator is the full sub-Laplacian Delta = sum_l X_l^2 (not Delta/2),
so one simulation step of size dt composes a Gaussian horizontal increment
with covariance 2 dt I_q through the group law:

    w  <-  w . (dX, 0),    dX ~ N(0, 2 dt I_q).

The horizontal marginal is exact; the vertical part is the left-point
Riemann sum of the area integral, with weak error O(1/K) controlled by the
floor K = n_steps h >= 16 and a doubled-resolution check in the tests.

Gradient-commutation ratios |grad^k e^{h Delta} f| / e^{h Delta}|grad^k f|
are formed from central differences of the estimated semigroup along the
left-invariant frame, with common random numbers across stencil points, and
carry delta-method confidence intervals.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError, NumericalFailure
from .groups import GroupPoint, bracket, multiply
from .reports import QbeEstimate
from .util import sub_rng


@dataclass(frozen=True)
class DiffusionConfig:
    """Simulation parameters; n_steps counts steps per unit time."""

    h: float
    n_paths: int
    n_steps: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.h <= 0:
            raise InputError("h must be positive")
        if self.n_paths < 1000:
            raise InputError("need at least 1e3 paths")
        if self.n_steps * self.h < 16:
            raise InputError("resolution floor: n_steps * h >= 16")

    @property
    def total_steps(self):
        return max(1, int(np.ceil(self.n_steps * self.h)))


@dataclass(frozen=True)
class SemigroupEstimate:
    value: float
    stderr: float
    n_paths: int

    def to_jsonable(self):
        return {"value": self.value, "stderr": self.stderr, "n_paths": self.n_paths}


def _path_generator(seed, path_index):
    return sub_rng(seed, 100, path_index)


def sample_diffusion(spec, cfg, path_index, riemannian=False):
    """Endpoint W_h of one simulated path, reproducible from (seed, path_index)."""
    rng = _path_generator(cfg.seed, path_index)
    K = cfg.total_steps
    dt = cfg.h / K
    incr = rng.standard_normal((K, spec.q)) * np.sqrt(2.0 * dt)
    x = np.zeros(spec.q)
    t = np.zeros(spec.m)
    for k in range(K):
        t += 0.5 * bracket(spec, x, incr[k])
        x += incr[k]
    if riemannian:
        t = t + rng.standard_normal(spec.m) * np.sqrt(2.0 * cfg.h)
    return GroupPoint(x, t)


def simulate_paths(spec, cfg, riemannian=False):
    """All path endpoints as a batched GroupPoint; row i replays path i."""
    B, K = cfg.n_paths, cfg.total_steps
    dt = cfg.h / K
    scale = np.sqrt(2.0 * dt)
    X = np.zeros((B, spec.q))
    T = np.zeros((B, spec.m))
    chunk = max(1, min(B, 1 << 14))
    for lo in range(0, B, chunk):
        hi = min(lo + chunk, B)
        n = hi - lo
        incr = np.empty((n, K, spec.q))
        vert = np.empty((n, spec.m)) if riemannian else None
        for i in range(n):
            rng = _path_generator(cfg.seed, lo + i)
            incr[i] = rng.standard_normal((K, spec.q))
            if riemannian:
                vert[i] = rng.standard_normal(spec.m)
        incr *= scale
        cum = np.cumsum(incr, axis=1)
        prev = np.concatenate([np.zeros((n, 1, spec.q)), cum[:, :-1]], axis=1)
        T[lo:hi] = 0.5 * np.einsum("jkl,BKl,BKk->Bj", spec.U, prev, incr)
        X[lo:hi] = cum[:, -1]
        if riemannian:
            T[lo:hi] += vert * np.sqrt(2.0 * cfg.h)
    return GroupPoint(X, T)


@dataclass(frozen=True)
class TestFunction:
    """Smooth observable with vectorized evaluation.

    `fn(x, t)` maps batched coordinates to values; `hgrad(x, t)`, when
    present, returns the analytic horizontal gradient norm |grad f|.
    """

    kind: str
    fn: Callable
    hgrad: Callable | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, g):
        return self.fn(g.x, g.t)

    def grad_norm(self, spec, g, k=1, step=1e-4):
        if k == 1 and self.hgrad is not None:
            return self.hgrad(g.x, g.t)
        from .heatkernel import horizontal_gradient_fd, second_gradient_fd

        if k == 1:
            return horizontal_gradient_fd(spec, lambda p: self.fn(p.x, p.t), g, step)
        return second_gradient_fd(spec, lambda p: self.fn(p.x, p.t), g, step=5e-3)


def coordinate_function(spec, axis="x", index=0):
    if axis == "x":
        unit = np.zeros(spec.q)
        unit[index] = 1.0
        return TestFunction(kind="coordinate",
                            fn=lambda x, t: x[..., index],
                            hgrad=lambda x, t: np.ones(x.shape[:-1]),
                            params={"axis": "x", "index": index})
    return TestFunction(kind="coordinate",
                        fn=lambda x, t: t[..., index],
                        params={"axis": "t", "index": index})


def horizontal_square_function(spec):
    """f = |x|^2 with Delta f = 2q, |grad f| = 2|x|."""
    return TestFunction(kind="polynomial",
                        fn=lambda x, t: np.sum(x * x, axis=-1),
                        hgrad=lambda x, t: 2.0 * np.linalg.norm(x, axis=-1),
                        params={"name": "|x|^2"})


def gaussian_bump(spec, center, lam):
    """f(g) = exp(-lam (|x'|^4 + |t'|^2)) at g' = center^{-1} g.

    |x|^4 + |t|^2 is a smooth fourth power of a homogeneous norm, so f is
    C^infinity with rapid decay; the horizontal gradient is analytic:
    |grad f| = lam f |4|x'|^2 x' + Omega_{t'} x'|.
    """
    cx = np.asarray(center.x, dtype=float)
    ct = np.asarray(center.t, dtype=float)
    U = spec.U

    def translate(x, t):
        xs = x - cx
        ts = t - ct + 0.5 * np.einsum("jkl,...l,...k->...j", U, -cx, x)
        return xs, ts

    def fn(x, t):
        xs, ts = translate(x, t)
        return np.exp(-lam * (np.sum(xs * xs, axis=-1) ** 2 + np.sum(ts * ts, axis=-1)))

    def hgrad(x, t):
        xs, ts = translate(x, t)
        f = np.exp(-lam * (np.sum(xs * xs, axis=-1) ** 2 + np.sum(ts * ts, axis=-1)))
        vec = 4.0 * np.sum(xs * xs, axis=-1)[..., None] * xs \
            + np.einsum("...j,jkl,...l->...k", ts, U, xs)
        return lam * f * np.linalg.norm(vec, axis=-1)

    return TestFunction(kind="gaussian-bump", fn=fn, hgrad=hgrad,
                        params={"center_x": cx.tolist(), "center_t": ct.tolist(),
                                "lam": lam})


def bump_family(spec, count=20):
    """Deterministic family of bumps: lattice centers, widths 0.5 / 1 / 2."""
    lams = [0.5, 1.0, 2.0]
    offsets = [0.0, 1.5, -1.5, 0.75, -0.75, 2.25, -2.25]
    fams = []
    k = 0
    while len(fams) < count:
        lam = lams[k % len(lams)]
        cx = np.zeros(spec.q)
        cx[k % spec.q] = offsets[k % len(offsets)]
        ct = np.zeros(spec.m)
        ct[k % spec.m] = offsets[(k // 2) % len(offsets)] / 2.0
        fams.append(gaussian_bump(spec, GroupPoint(cx, ct), lam))
        k += 1
    return fams


def heat_semigroup(spec, f, g, cfg, paths=None, reject_limit=0.01):
    """Monte Carlo e^{h Delta} f (g) = mean of f(g . W_h) with standard error."""
    W = paths if paths is not None else simulate_paths(spec, cfg)
    pts = multiply(spec, GroupPoint(np.broadcast_to(g.x, W.x.shape),
                                    np.broadcast_to(g.t, W.t.shape)), W)
    vals = np.asarray(f(pts), dtype=float)
    finite = np.isfinite(vals)
    n_bad = int(vals.size - np.count_nonzero(finite))
    if n_bad > reject_limit * vals.size:
        raise NumericalFailure("too many non-finite path values", n_bad=n_bad)
    v = vals[finite]
    return SemigroupEstimate(value=float(np.mean(v)),
                             stderr=float(np.std(v, ddof=1) / np.sqrt(len(v))),
                             n_paths=int(len(v)))


def _frame_shift(spec, direction, step, vertical=False):
    x = np.zeros(spec.q)
    t = np.zeros(spec.m)
    if vertical:
        t[direction] = step
    else:
        x[direction] = step
    return GroupPoint(x, t)


def _stencil_points(spec, g, directions, step):
    """g . (+/- step e_l) for each direction; returns list of (plus, minus)."""
    out = []
    for vertical, l in directions:
        plus = multiply(spec, g, _frame_shift(spec, l, step, vertical))
        minus = multiply(spec, g, _frame_shift(spec, l, -step, vertical))
        out.append((plus, minus))
    return out


def _ratio_with_ci(comp_means, comp_paths, denom_paths):
    """Delta-method CI for |mean vector| / mean(denominator).

    comp_means: (C,) component means; comp_paths: (C, n) per-path values;
    denom_paths: (n,).
    """
    n = denom_paths.shape[0]
    A = float(np.linalg.norm(comp_means))
    Bm = float(np.mean(denom_paths))
    if Bm <= 0:
        raise NumericalFailure("denominator estimate nonpositive", value=Bm)
    R = A / Bm
    if A == 0.0:
        return QbeEstimate(ratio=0.0, ci_low=0.0, ci_high=0.0, numerator=0.0,
                           denominator=Bm, n_paths=n)
    u = comp_means / A
    infl = (u @ comp_paths) / Bm - R * denom_paths / Bm
    se = float(np.std(infl, ddof=1) / np.sqrt(n))
    return QbeEstimate(ratio=R, ci_low=R - 1.96 * se, ci_high=R + 1.96 * se,
                       numerator=A, denominator=Bm, n_paths=n)


def qbe_ratio(spec, f, g, cfg, k=1, paths=None, step=None):
    """|grad^k e^{h Delta} f|(g) / e^{h Delta}(|grad^k f|)(g) with CI.

    Common random numbers: one path batch drives every stencil point, so the
    finite differences subtract correlated estimates.  k = 1 uses step 1e-3,
    k = 2 uses 5e-3 (MC noise dominates below these).
    """
    if k not in (1, 2):
        raise InputError("k must be 1 or 2")
    step = step if step is not None else (1e-3 if k == 1 else 5e-3)
    W = paths if paths is not None else simulate_paths(spec, cfg)

    def semigroup_paths(base):
        pts = multiply(spec, GroupPoint(np.broadcast_to(base.x, W.x.shape),
                                        np.broadcast_to(base.t, W.t.shape)), W)
        return np.asarray(f(pts), dtype=float)

    comp_paths = []
    if k == 1:
        for l in range(spec.q):
            plus = semigroup_paths(multiply(spec, g, _frame_shift(spec, l, step)))
            minus = semigroup_paths(multiply(spec, g, _frame_shift(spec, l, -step)))
            comp_paths.append((plus - minus) / (2.0 * step))
    else:
        center = semigroup_paths(g)
        for l in range(spec.q):
            for kk in range(spec.q):
                if l == kk:
                    plus = semigroup_paths(multiply(spec, g, _frame_shift(spec, l, step)))
                    minus = semigroup_paths(multiply(spec, g, _frame_shift(spec, l, -step)))
                    comp_paths.append((plus - 2.0 * center + minus) / step ** 2)
                else:
                    spp = semigroup_paths(multiply(spec, multiply(spec, g, _frame_shift(spec, l, step)), _frame_shift(spec, kk, step)))
                    spm = semigroup_paths(multiply(spec, multiply(spec, g, _frame_shift(spec, l, step)), _frame_shift(spec, kk, -step)))
                    smp = semigroup_paths(multiply(spec, multiply(spec, g, _frame_shift(spec, l, -step)), _frame_shift(spec, kk, step)))
                    smm = semigroup_paths(multiply(spec, multiply(spec, g, _frame_shift(spec, l, -step)), _frame_shift(spec, kk, -step)))
                    comp_paths.append((spp - spm - smp + smm) / (4.0 * step ** 2))
    comp_paths = np.stack(comp_paths)
    comp_means = comp_paths.mean(axis=1)

    pts = multiply(spec, GroupPoint(np.broadcast_to(g.x, W.x.shape),
                                    np.broadcast_to(g.t, W.t.shape)), W)
    denom_paths = np.asarray(f.grad_norm(spec, pts, k=k), dtype=float)
    return _ratio_with_ci(comp_means, comp_paths, denom_paths)


def riemannian_qbe_ratio(spec, f, g, cfg, k=1, paths=None, step=None):
    """Full-gradient analogue with the vertically augmented diffusion.

    The diffusion gains an independent N(0, 2h I_m) vertical increment; the
    gradient stencil spans the q horizontal frame directions and the m
    vertical coordinate directions.
    """
    if k != 1:
        raise InputError("the full-gradient scan is implemented for k = 1")
    step = step if step is not None else 1e-3
    W = paths if paths is not None else simulate_paths(spec, cfg, riemannian=True)

    def semigroup_paths(base):
        pts = multiply(spec, GroupPoint(np.broadcast_to(base.x, W.x.shape),
                                        np.broadcast_to(base.t, W.t.shape)), W)
        return np.asarray(f(pts), dtype=float)

    comp_paths = []
    dirs = [(False, l) for l in range(spec.q)] + [(True, j) for j in range(spec.m)]
    for vertical, l in dirs:
        plus = semigroup_paths(multiply(spec, g, _frame_shift(spec, l, step, vertical)))
        minus = semigroup_paths(multiply(spec, g, _frame_shift(spec, l, -step, vertical)))
        comp_paths.append((plus - minus) / (2.0 * step))
    comp_paths = np.stack(comp_paths)
    comp_means = comp_paths.mean(axis=1)

    pts = multiply(spec, GroupPoint(np.broadcast_to(g.x, W.x.shape),
                                    np.broadcast_to(g.t, W.t.shape)), W)
    # full gradient norm: horizontal frame derivatives plus d/dt_j
    from .heatkernel import horizontal_gradient_fd

    hor = horizontal_gradient_fd(spec, lambda p: f(p), pts, step=1e-4) \
        if f.hgrad is None else f.hgrad(pts.x, pts.t)
    vert_comps = []
    for j in range(spec.m):
        sh = _frame_shift(spec, j, 1e-4, vertical=True)
        fp = f(multiply(spec, pts, sh))
        fm = f(multiply(spec, pts, _frame_shift(spec, j, -1e-4, vertical=True)))
        vert_comps.append((np.asarray(fp) - np.asarray(fm)) / 2e-4)
    denom_paths = np.sqrt(np.asarray(hor) ** 2
                          + np.sum(np.stack(vert_comps) ** 2, axis=0))
    return _ratio_with_ci(comp_means, comp_paths, denom_paths)


def commutation_gap(spec, f, g, cfg):
    """e^{h Delta} e^{h Delta_T} f versus the jointly simulated full flow.

    Returns (sequential, joint) SemigroupEstimates; the two agree in law
    because vertical increments commute with everything.
    """
    W = simulate_paths(spec, cfg)
    rngv = sub_rng(cfg.seed, 101)
    vert = rngv.standard_normal((cfg.n_paths, spec.m)) * np.sqrt(2.0 * cfg.h)
    Wv = GroupPoint(W.x, W.t + vert)
    seq = heat_semigroup(spec, f, g, cfg, paths=Wv)
    cfg_joint = DiffusionConfig(h=cfg.h, n_paths=cfg.n_paths,
                                n_steps=cfg.n_steps, seed=cfg.seed + 7919)
    Wj = simulate_paths(spec, cfg_joint, riemannian=True)
    joint = heat_semigroup(spec, f, g, cfg_joint, paths=Wj)
    return seq, joint
