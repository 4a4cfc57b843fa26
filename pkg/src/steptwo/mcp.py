"""Numerical verification of measure-contraction inequalities in Jacobian form.

Along the geodesic scaling eta -> s eta the contraction properties become
pointwise Jacobian inequalities:

* unweighted:  Jac(exp)(s eta) >= s^(N-q-m) Jac(exp)(eta)  on the domain D;
* weighted:    H(s eta) Jac(exp)(s eta) >= C^-1 s^(N-q-m) H(eta) Jac(exp)(eta)
  with H = (p e^{d^2/4}) o exp,

and `mcp_scan` estimates the infimum of the corresponding ratio over a
sample of (eta, s) pairs.  `set_level_mcp_check` re-derives the weighted
statement at the level of sets by push-forward Monte Carlo, which gives an
independent consistency check of the pointwise ratios.

The free-group routines follow the small-time reduction: Jac(exp) is
comparable to d^2 A with A = T2 |x| m^(1/2), so the inequality chain tested
by `n32_chain_check` is

    (1 + eps d)(1 + eps_s d_s + eps_s A_s^(1/2)) A
        <~  (1 + eps_s d_s)(1 + eps d + eps A^(1/2)) s^(6-N0) A_s,

together with the auxiliary bound A <~ eps^2 d^4.
"""

from __future__ import annotations

import numpy as np

from .distance import cc_distance_batch, certify_preimage
from .errors import InputError, ScanError
from .geodesics import (Covector, _exp_xt, _jacobian_accurate, _jacobian_batch,
                        _jacobian_scaled_batch, scaling_jacobian_factor)
from .groups import GroupPoint, polar_vertical_components, points_in_smooth_set
from .heatkernel import heuristic_epsilon
from .reports import RatioReport, SetLevelResult
from .util import sub_rng

DEFAULT_S_GRID = tuple(sorted(set(
    [round(0.05 * k, 2) for k in range(1, 21)] + [2.0 ** -k for k in range(1, 11)])))


def _unit_rows(rng, n, dim):
    v = rng.standard_normal((n, dim))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def sample_domain(spec, n, seed=0, zeta_range=(0.2, 5.0), boundary_frac=0.15,
                  tau_max=None):
    """Sample covectors from the injectivity domain.

    Heisenberg / H-type: |zeta| uniform in `zeta_range`, uniform directions,
    |tau| uniform in (0, 2 pi), plus a deterministic boundary-refinement
    block with |tau| up to 2 pi - 1e-3 where the Jacobian degenerates.
    Other groups: candidates are filtered by the numerical domain
    certificate, so the returned batch may be smaller than requested.
    """
    rng = sub_rng(seed, 3)
    q, m = spec.q, spec.m
    if spec.is_htype:
        nb = int(boundary_frac * n)
        nr = n - nb
        zdir = _unit_rows(rng, n, q)
        zn = rng.uniform(zeta_range[0], zeta_range[1], size=n)
        tdir = _unit_rows(rng, n, m) if m > 1 else np.where(
            rng.uniform(size=(n, 1)) < 0.5, -1.0, 1.0)
        tn = np.empty(n)
        tn[:nr] = rng.uniform(0.0, 2.0 * np.pi, size=nr)
        # boundary grid: log-spaced gaps down to 1e-3
        gaps = np.logspace(-3, -0.5, max(nb, 1))
        tn[nr:] = 2.0 * np.pi - gaps[:nb]
        return Covector(zdir * zn[:, None], tdir * tn[:, None])
    # certificate-filtered sampling
    tau_max = tau_max if tau_max is not None else 2.0 * np.pi
    zdir = _unit_rows(rng, n, q)
    zn = rng.uniform(zeta_range[0], zeta_range[1], size=n)
    tdir = _unit_rows(rng, n, m)
    tn = rng.uniform(0.0, tau_max, size=n)
    Z = zdir * zn[:, None]
    T = tdir * tn[:, None]
    ok, _ = certify_preimage(spec, Z, T)
    return Covector(Z[ok], T[ok])


def mcp_ratio(spec, eta, s, N):
    """Jac(exp)(s eta) / (s^(N-q-m) Jac(exp)(eta)); the property holds iff >= 1."""
    s = float(s)
    if not 0.0 < s <= 1.0:
        raise InputError("scale s must lie in (0, 1]")
    jac1 = _jacobian_batch(spec, eta.zeta[None], eta.tau[None])[0]
    jacs = _jacobian_scaled_batch(spec, eta.zeta[None], eta.tau[None], s)[0]
    return float(jacs / (s ** (N - spec.q - spec.m) * jac1))


def _weight_H(spec, kernel, Z, T, zeta_norm):
    """H(eta) = p(exp eta) e^{|zeta|^2/4} for batched covectors."""
    x, t = _exp_xt(spec, Z, T)
    logp = kernel.log(GroupPoint(x, t), 1.0)
    return np.exp(np.asarray(logp) + 0.25 * zeta_norm ** 2)


def weighted_mcp_ratio(spec, kernel, eta, s, N):
    """H(s eta) Jac(s eta) / (s^(N-q-m) H(eta) Jac(eta))."""
    s = float(s)
    if not 0.0 < s <= 1.0:
        raise InputError("scale s must lie in (0, 1]")
    base = mcp_ratio(spec, eta, s, N)
    zn = float(eta.zeta_norm)
    H1 = _weight_H(spec, kernel, eta.zeta[None], eta.tau[None], np.array([zn]))[0]
    Hs = _weight_H(spec, kernel, s * eta.zeta[None], s * eta.tau[None],
                   np.array([s * zn]))[0]
    return float(base * Hs / H1)


def mcp_scan(spec, N, n_samples, seed=0, kernel=None, s_grid=None,
             threshold=None, zeta_range=(0.2, 5.0)):
    """Infimum of the (optionally weighted) contraction ratio over (eta, s).

    With `kernel=None` this scans the unweighted Jacobian ratio and the
    default violation threshold is 1 - 1e-6; with a KernelModel the
    H-weighted ratio is scanned and the infimum estimates C^-1.
    """
    s_grid = list(s_grid if s_grid is not None else DEFAULT_S_GRID)
    eta = sample_domain(spec, n_samples, seed=seed, zeta_range=zeta_range)
    B = eta.zeta.shape[0]
    if B == 0:
        raise ScanError("no domain samples available")
    rng = sub_rng(seed, 4)
    s = np.asarray(s_grid)[rng.integers(0, len(s_grid), size=B)]

    Z, T = eta.zeta, eta.tau
    jac1 = _jacobian_accurate(spec, Z, T)
    jacs = _jacobian_scaled_batch(spec, Z, T, s)
    good = np.isfinite(jac1) & np.isfinite(jacs) & (jac1 > 0)
    ratio = np.where(good, jacs / (s ** (N - spec.q - spec.m) * np.where(good, jac1, 1.0)), np.nan)

    if kernel is not None:
        zn = np.linalg.norm(Z, axis=1)
        H1 = _weight_H(spec, kernel, Z, T, zn)
        Hs = _weight_H(spec, kernel, s[:, None] * Z, s[:, None] * T, s * zn)
        ratio = ratio * Hs / H1
        if threshold is None:
            threshold_eff = None
        else:
            threshold_eff = threshold
    else:
        threshold_eff = 1.0 - 1e-6 if threshold is None else threshold

    valid = np.isfinite(ratio)
    if np.count_nonzero(valid) < 0.95 * B:
        raise ScanError("too many invalid ratio samples",
                        n_invalid=int(B - np.count_nonzero(valid)))
    r = ratio[valid]
    i_min = int(np.argmin(r))
    idx = np.where(valid)[0][i_min]
    violations = int(np.count_nonzero(r < threshold_eff)) if threshold_eff is not None else 0
    report = RatioReport(
        group=spec.name, n_samples=int(np.count_nonzero(valid)), seed=seed,
        N=float(N), s_grid=s_grid,
        inf_ratio=float(r[i_min]), sup_ratio=float(np.max(r)),
        argmin={"zeta": Z[idx].tolist(), "tau": T[idx].tolist(), "s": float(s[idx])},
        violations=violations, threshold=threshold_eff,
        extra={"weighted": kernel is not None,
               "jacobian_positive": bool(np.all(jac1[valid] > 0) and np.all(jacs[valid] > 0)),
               "C_inv_estimate": float(r[i_min]) if kernel is not None else None},
    )
    return report


def smallest_passing_N(spec, n_samples, seed=0, candidates=None, s_grid=None,
                       threshold=1.0 - 1e-6):
    """First integer N whose unweighted scan shows no violation."""
    candidates = candidates if candidates is not None else range(5, 31)
    for N in candidates:
        rep = mcp_scan(spec, N, n_samples, seed=seed, s_grid=s_grid,
                       threshold=threshold)
        if rep.violations == 0:
            return int(N), rep
    raise ScanError("no candidate exponent passed", candidates=list(candidates))


def n32_chain_check(g_samples, epsilon_provider=None, N0=14, s_grid=None,
                    seed=0, spec=None, max_skip_frac=0.05):
    """Inequality chain for the three-generator free group.

    For each resolved sample (preimage eta, distance d = |zeta|) and each s
    in the grid, evaluates

      lhs = (1 + eps d)(1 + eps_s d_s + eps_s sqrt(A_s)) A
      rhs = (1 + eps_s d_s)(1 + eps d + eps sqrt(A)) s^(6-N0) A_s

    and reports inf(rhs/lhs) plus sup A/(eps^2 d^4).  `epsilon_provider`
    maps (points, preimage tau) to positive eps with eps <= eps_s; the
    default is the HEURISTIC pi - |theta| and is labeled as such.
    """
    from .groups import n32

    spec = spec or n32()
    if N0 < 14:
        raise InputError("trial exponent must be at least the geodesic dimension 14")
    s_grid = list(s_grid if s_grid is not None else
                  [round(0.1 * k, 1) for k in range(1, 11)])
    X = np.atleast_2d(g_samples.x)
    T = np.atleast_2d(g_samples.t)
    B = X.shape[0]
    sol = cc_distance_batch(spec, GroupPoint(X, T))
    smooth = points_in_smooth_set(GroupPoint(X, T))
    keep = sol.ok & sol.has_preimage & smooth
    n_skip = int(B - np.count_nonzero(keep))
    if n_skip > max_skip_frac * B:
        raise ScanError(f"{n_skip}/{B} samples unresolved or on the cut locus",
                        n_skipped=n_skip)
    X, T = X[keep], T[keep]
    Z, Tau = sol.zeta[keep], sol.tau[keep]
    d = sol.distance[keep]

    eps_mode = "heuristic" if epsilon_provider is None else "user"
    if epsilon_provider is None:
        eps = heuristic_epsilon(spec, GroupPoint(X, T), Tau)
    else:
        eps = np.asarray(epsilon_provider(GroupPoint(X, T), Tau), dtype=float)
    if np.any(eps <= 0):
        raise InputError("epsilon provider returned a nonpositive value")

    _, T2 = polar_vertical_components(GroupPoint(X, T))
    r = np.linalg.norm(X, axis=1)
    mgap = np.maximum(0.25 * (d ** 2 - r ** 2), 0.0)
    A = T2 * r * np.sqrt(mgap)

    rows = []
    for s in s_grid:
        xs, ts = _exp_xt(spec, Z, Tau, float(s))
        gs = GroupPoint(xs, ts)
        d_s = s * d
        if epsilon_provider is None:
            eps_s = heuristic_epsilon(spec, gs, s * Tau)
        else:
            eps_s = np.asarray(epsilon_provider(gs, s * Tau), dtype=float)
        if np.any(eps - eps_s > 1e-12):
            raise InputError("epsilon provider violates eps <= eps_s")
        _, T2s = polar_vertical_components(gs)
        rs = np.linalg.norm(xs, axis=1)
        mgs = np.maximum(0.25 * (d_s ** 2 - rs ** 2), 0.0)
        A_s = T2s * rs * np.sqrt(mgs)
        lhs = (1.0 + eps * d) * (1.0 + eps_s * d_s + eps_s * np.sqrt(A_s)) * A
        rhs = (1.0 + eps_s * d_s) * (1.0 + eps * d + eps * np.sqrt(A)) \
            * s ** (6.0 - N0) * A_s
        rows.append(np.where(lhs > 0, rhs / np.where(lhs > 0, lhs, 1.0), np.nan))
    ratios = np.stack(rows)              # (n_s, B)
    valid = np.isfinite(ratios)
    r_flat = ratios[valid]
    si, bi = np.unravel_index(int(np.nanargmin(np.where(valid, ratios, np.inf))),
                              ratios.shape)
    aux = A / (eps ** 2 * d ** 4)
    return RatioReport(
        group=spec.name, n_samples=int(X.shape[0]), seed=seed, N=float(N0),
        s_grid=s_grid, inf_ratio=float(np.min(r_flat)),
        sup_ratio=float(np.max(r_flat)),
        argmin={"x": X[bi].tolist(), "t": T[bi].tolist(), "s": float(s_grid[si])},
        threshold=0.0, violations=int(np.count_nonzero(r_flat <= 0.0)),
        extra={"epsilon_mode": eps_mode,
               "sup_A_over_eps2_d4": float(np.max(aux)),
               "n_skipped": n_skip},
    )


def core_lemma_check(spec, kernel, g_samples, A_param, max_i_points=24,
                     seed=0):
    """Empirical sup of K_i / Jac(Upsilon_i) along discretized geodesics.

    K_i compares the weighted density h = p e^{d^2/4} at g and at the
    geodesic point g(i) = exp((1 - i d^-3) eta); Jac(Upsilon_i) is assembled
    from the two endpoint Jacobians and the closed-form radial factor.
    Also verifies d(g(i)) = s(i) d(g).
    """
    X = np.atleast_2d(g_samples.x)
    T = np.atleast_2d(g_samples.t)
    sol = cc_distance_batch(spec, GroupPoint(X, T))
    keep = sol.ok & sol.has_preimage & (sol.distance > A_param)
    if not np.any(keep):
        raise ScanError("no samples beyond the distance cutoff")
    Z, Tau, d = sol.zeta[keep], sol.tau[keep], sol.distance[keep]
    Xk, Tk = X[keep], T[keep]

    logp_g = np.asarray(kernel.log(GroupPoint(Xk, Tk), 1.0))
    jac_g = _jacobian_accurate(spec, Z, Tau)

    sup_ratio = -np.inf
    argmax = None
    d_defect = 0.0
    for b in range(Z.shape[0]):
        n_i = int(np.floor(2.0 * d[b] ** 3 / A_param))
        i_vals = np.unique(np.linspace(0, n_i, min(max_i_points, n_i + 1)).astype(int))
        s_i = 1.0 - i_vals * d[b] ** -3
        xs, ts = _exp_xt(spec, np.repeat(Z[b][None], len(s_i), 0),
                         np.repeat(Tau[b][None], len(s_i), 0), s_i)
        gi = GroupPoint(xs, ts)
        logp_i = np.asarray(kernel.log(gi, 1.0))
        logK = (logp_g[b] + d[b] ** 2 / 4.0) - (logp_i + (s_i * d[b]) ** 2 / 4.0)
        jac_i = _jacobian_scaled_batch(spec, np.repeat(Z[b][None], len(s_i), 0),
                                       np.repeat(Tau[b][None], len(s_i), 0), s_i)
        jac_ups = jac_i * scaling_jacobian_factor(spec.q, spec.m, s_i) / jac_g[b]
        ratio = np.exp(logK) / jac_ups
        j = int(np.argmax(ratio))
        if ratio[j] > sup_ratio:
            sup_ratio = float(ratio[j])
            argmax = {"x": Xk[b].tolist(), "t": Tk[b].tolist(),
                      "s": float(s_i[j]), "i": int(i_vals[j])}
        di = cc_distance_batch(spec, gi).distance
        d_defect = max(d_defect, float(np.max(np.abs(di - s_i * d[b]) / (s_i * d[b]))))

    return RatioReport(
        group=spec.name, n_samples=int(Z.shape[0]), seed=seed,
        sup_ratio=sup_ratio, argmax=argmax,
        extra={"A_param": A_param, "d_scaling_defect": d_defect,
               "n_skipped": int(X.shape[0] - Z.shape[0])},
    )


def set_level_mcp_check(spec, kernel, E_center, E_radius, s, N, n_samples,
                        seed=0, max_skip_frac=0.05):
    """Push-forward Monte Carlo weighted masses of Z_s(o, E) and E.

    E is the ball B(E_center, E_radius); base points are sampled uniformly
    by rejection, their preimages recovered, and the s-intermediate mass is
    estimated with the change-of-variables weight
    s^(q+m) H(s eta) Jac(s eta) / Jac(eta).  The weighted contraction
    statement predicts lhs >= C^-1 s^N rhs.
    """
    if not spec.is_htype:
        raise InputError("set-level check needs closed-form preimages (H-type)")
    if not 0.0 < s <= 1.0:
        raise InputError("scale s must lie in (0, 1]")
    rng = sub_rng(seed, 5)
    q, m = spec.q, spec.m
    r = E_radius
    # rejection sampling of B(o, r), then left-translation by the center
    need = n_samples
    XS, TS = [], []
    n_draw = 0
    for _ in range(200):
        k = max(2 * need, 1000)
        Xc = rng.uniform(-r, r, size=(k, q))
        Tc = rng.uniform(-r * r / (4.0 * np.pi), r * r / (4.0 * np.pi), size=(k, m))
        n_draw += k
        db = cc_distance_batch(spec, GroupPoint(Xc, Tc))
        inside = db.ok & (db.distance < r)
        XS.append(Xc[inside])
        TS.append(Tc[inside])
        if sum(len(a) for a in XS) >= n_samples:
            break
    Xb = np.concatenate(XS)[:n_samples]
    Tb = np.concatenate(TS)[:n_samples]
    if len(Xb) < n_samples:
        raise ScanError("rejection sampling starved", accepted=len(Xb))
    from .groups import multiply

    gE = multiply(spec, GroupPoint(np.broadcast_to(E_center.x, Xb.shape),
                                   np.broadcast_to(E_center.t, Tb.shape)),
                  GroupPoint(Xb, Tb))
    sol = cc_distance_batch(spec, gE)
    good = sol.ok & sol.has_preimage
    n_skip = int(n_samples - np.count_nonzero(good))
    if n_skip > max_skip_frac * n_samples:
        raise ScanError(f"{n_skip}/{n_samples} preimages unresolved", n_skipped=n_skip)
    Z, Tau = sol.zeta[good], sol.tau[good]
    zn = np.linalg.norm(Z, axis=1)

    H1 = _weight_H(spec, kernel, Z, Tau, zn)
    Hs = _weight_H(spec, kernel, s * Z, s * Tau, s * zn)
    jac1 = _jacobian_accurate(spec, Z, Tau)
    jacs = _jacobian_scaled_batch(spec, Z, Tau, s)
    w_lhs = s ** (q + m) * Hs * jacs / jac1
    w_rhs = H1

    n_good = len(w_lhs)
    lhs, rhs = float(np.mean(w_lhs)), float(np.mean(w_rhs))
    lse = float(np.std(w_lhs, ddof=1) / np.sqrt(n_good))
    rse = float(np.std(w_rhs, ddof=1) / np.sqrt(n_good))
    return SetLevelResult(lhs=lhs, lhs_stderr=lse, rhs=rhs, rhs_stderr=rse,
                          n_samples=n_good, s=float(s),
                          extra={"n_skipped": n_skip, "N": N,
                                 "volume_factor_note":
                                     "both sides share the vol(E) factor"})
