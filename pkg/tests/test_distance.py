import numpy as np
import pytest

from steptwo import geodesics as geo
from steptwo import groups as G
from steptwo.distance import (ball_volume_estimate, cc_distance,
                              cc_distance_batch, certify_preimage,
                              norm_equivalence_scan)
from steptwo.errors import InputError, ScanError
from steptwo.geodesics import Covector
from steptwo.groups import GroupPoint


def sample_domain_covectors(spec, n, seed, zlo=0.3, zhi=4.0, tmax=1.9 * np.pi):
    rng = np.random.default_rng(seed)
    zd = rng.normal(size=(n, spec.q))
    zd /= np.linalg.norm(zd, axis=1, keepdims=True)
    zn = rng.uniform(zlo, zhi, n)
    td = rng.normal(size=(n, spec.m))
    td /= np.linalg.norm(td, axis=1, keepdims=True)
    tn = rng.uniform(1e-3, tmax, n)
    return zd * zn[:, None], td * tn[:, None], zn


def test_h1_examples(h1):
    res = cc_distance(h1, GroupPoint([3, 4], [0]))
    assert abs(res.distance - 5.0) <= 1e-12
    assert res.method == "closed-reduction"
    res = cc_distance(h1, GroupPoint([0, 0], [1]))
    assert abs(res.distance - np.sqrt(4 * np.pi)) <= 1e-12
    assert res.method == "boundary-limit"
    assert res.preimage is None
    res = cc_distance(h1, G.identity(h1))
    assert res.distance == 0.0


@pytest.mark.parametrize("name", ["h1", "h2", "h42"])
def test_roundtrip_htype(name, request):
    spec = request.getfixturevalue(name)
    Z, T, zn = sample_domain_covectors(spec, 500, 11)
    x, t = geo._exp_xt(spec, Z, T)
    out = cc_distance_batch(spec, GroupPoint(x, t))
    assert np.all(out.ok)
    rel = np.abs(out.distance - zn) / zn
    assert np.max(rel) <= 1e-6
    assert np.max(out.residual) <= 1e-6 * np.maximum(1.0, out.distance).max()
    # preimage recovery
    assert np.max(np.abs(out.zeta - Z)) <= 1e-9
    assert np.max(np.abs(out.tau - T)) <= 1e-9


def test_roundtrip_n32(n32spec):
    Z, T, zn = sample_domain_covectors(n32spec, 300, 12)
    x, t = geo._exp_xt(n32spec, Z, T)
    out = cc_distance_batch(n32spec, GroupPoint(x, t))
    ok = out.ok
    assert ok.mean() >= 0.95
    # the solver may legitimately find a shorter branch (eta outside D);
    # it must never report a longer one
    assert np.all(out.distance[ok] <= zn[ok] * (1 + 1e-6))
    inside = ok & (np.abs(out.distance - zn) / zn <= 1e-6)
    assert inside.mean() >= 0.9


def test_scaling_property(h1, n32spec):
    for spec, n in ((h1, 200), (n32spec, 60)):
        Z, T, _ = sample_domain_covectors(spec, n, 13)
        x, t = geo._exp_xt(spec, Z, T)
        g = GroupPoint(x, t)
        base = cc_distance_batch(spec, g)
        r = 1.7
        out = cc_distance_batch(spec, G.dilate(spec, r, g))
        m = base.ok & out.ok
        rel = np.abs(out.distance[m] - r * base.distance[m]) / (r * base.distance[m])
        assert np.max(rel) <= 1e-6


def test_inversion_symmetry(h1):
    rng = np.random.default_rng(14)
    g = GroupPoint(rng.uniform(-3, 3, (300, 2)), rng.uniform(-3, 3, (300, 1)))
    fwd = cc_distance_batch(h1, g)
    bwd = cc_distance_batch(h1, G.inverse(h1, g))
    rel = np.abs(fwd.distance - bwd.distance) / np.maximum(fwd.distance, 1e-12)
    assert np.max(rel) <= 1e-6


def test_rotation_symmetry_n32(n32spec):
    # d(Ox, Ot) = d(x, t): a genuine check (the solver does not canonicalize)
    from scipy.stats import special_ortho_group

    Z, T, _ = sample_domain_covectors(n32spec, 80, 15)
    x, t = geo._exp_xt(n32spec, Z, T)
    base = cc_distance_batch(n32spec, GroupPoint(x, t))
    O = special_ortho_group.rvs(3, random_state=1)
    rot = cc_distance_batch(n32spec, GroupPoint(x @ O.T, t @ O.T))
    m = base.ok & rot.ok
    assert m.mean() > 0.9
    rel = np.abs(base.distance[m] - rot.distance[m]) / base.distance[m]
    assert np.max(rel) <= 1e-6


def test_triangle_inequality(h1, n32spec):
    for spec, n in ((h1, 120), (n32spec, 40)):
        rng = np.random.default_rng(16)
        pts = GroupPoint(rng.uniform(-2, 2, (3 * n, spec.q)),
                         rng.uniform(-2, 2, (3 * n, spec.m)))
        a, b, c = pts[:n], pts[n:2 * n], pts[2 * n:]
        dab = cc_distance_batch(spec, G.multiply(spec, G.inverse(spec, a), b))
        dbc = cc_distance_batch(spec, G.multiply(spec, G.inverse(spec, b), c))
        dac = cc_distance_batch(spec, G.multiply(spec, G.inverse(spec, a), c))
        m = dab.ok & dbc.ok & dac.ok
        viol = dac.distance[m] - dab.distance[m] - dbc.distance[m]
        assert np.max(viol) <= 1e-6


def test_norm_equivalence(h1):
    with pytest.raises(InputError):
        norm_equivalence_scan(h1, 50)
    c_low, c_high = norm_equivalence_scan(h1, 3000, seed=4)
    assert 0 < c_low <= c_high < np.inf
    # t = 0 slice is exactly Euclidean
    rng = np.random.default_rng(17)
    X = rng.uniform(-3, 3, (200, 2))
    out = cc_distance_batch(h1, GroupPoint(X, np.zeros((200, 1))))
    ratio = out.distance ** 2 / np.sum(X ** 2, axis=1)
    np.testing.assert_allclose(ratio, 1.0, atol=1e-12)
    # seed stability within 10%
    c_low2, c_high2 = norm_equivalence_scan(h1, 3000, seed=104)
    assert abs(c_low2 - c_low) / c_low <= 0.1
    assert abs(c_high2 - c_high) / c_high <= 0.1


def test_ball_volume_scaling(h1):
    with pytest.raises(InputError):
        ball_volume_estimate(h1, 1.0, 100)
    consts = []
    errs = []
    for i, r in enumerate((0.5, 1.0, 2.0)):
        est = ball_volume_estimate(h1, r, 20000, seed=20 + i)
        consts.append(est.value / r ** h1.Q)
        errs.append(est.stderr / r ** h1.Q)
    for i in (1, 2):
        assert abs(consts[i] - consts[0]) <= 3 * np.hypot(errs[i], errs[0])


def test_ball_volume_stderr_rate(h1):
    a = ball_volume_estimate(h1, 1.0, 20000, seed=33)
    b = ball_volume_estimate(h1, 1.0, 40000, seed=34)
    ratio = b.stderr / a.stderr
    assert 0.8 / np.sqrt(2) <= ratio <= 1.2 / np.sqrt(2)


def test_certify_preimage(n32spec):
    Z, T, zn = sample_domain_covectors(n32spec, 100, 21, tmax=1.5 * np.pi)
    ok, out = certify_preimage(n32spec, Z, T)
    assert ok.mean() >= 0.9
    # certified covectors have d = |zeta|
    assert np.max(np.abs(out.distance[ok] - zn[ok]) / zn[ok]) <= 1e-6


def test_batch_single_consistency(n32spec):
    g = GroupPoint([0.8, -0.2, 0.4], [0.3, 0.1, -0.2])
    single = cc_distance(n32spec, g)
    batch = cc_distance_batch(n32spec, GroupPoint(g.x[None], g.t[None]))
    assert abs(single.distance - batch.distance[0]) <= 1e-14
    assert single.method == "multistart-solve"
    assert single.residual <= 1e-6
