import numpy as np
import pytest

from steptwo import geodesics as geo
from steptwo import heatkernel as hk
from steptwo.distance import cc_distance_batch
from steptwo.errors import DomainError, InputError
from steptwo.geodesics import Covector
from steptwo.groups import GroupPoint, identity


def controlled_points(spec, n, seed, zhi=3.5, th_max=2.5):
    """Domain points via exp with moderate vertical weight (keeps the
    oscillatory cancellation within double precision)."""
    rng = np.random.default_rng(seed)
    zd = rng.normal(size=(n, spec.q))
    zd /= np.linalg.norm(zd, axis=1, keepdims=True)
    zn = rng.uniform(0.3, zhi, n)
    td = rng.normal(size=(n, spec.m))
    td /= np.linalg.norm(td, axis=1, keepdims=True)
    tn = rng.uniform(0.0, 2 * th_max, n)
    x, t = geo._exp_xt(spec, zd * zn[:, None], td * tn[:, None])
    return GroupPoint(x, t), zn


def test_value_at_origin(h1, model_h1):
    # (1/4pi^2) int_0^inf z/sinh z dz = (1/4pi^2)(pi^2/4) = 1/16
    assert abs(hk.kernel_heisenberg(GroupPoint([0.0, 0.0], [0.0])) - 1 / 16) <= 1e-10
    assert abs(model_h1(identity(h1)) - 1 / 16) <= 1e-10


def test_against_mpmath_oracle(model_h1):
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 40

    def oracle(r, u, h):
        f = lambda lam: mp.cos(lam * u) * (lam / (4 * mp.pi * mp.sinh(lam * h))) \
            * mp.e ** (-lam / 4 * mp.coth(lam * h) * r * r)
        return float(mp.quad(f, [0, mp.inf]) / mp.pi)

    for (r, u, h) in ((1.0, 0.3, 1.0), (2.0, 1.5, 1.0), (0.5, 0.2, 0.25)):
        ours = model_h1(GroupPoint([r, 0.0], [u]), h)
        ref = oracle(r, u, h)
        assert abs(ours - ref) / ref <= 1e-6


@pytest.mark.parametrize("name", ["model_h1", "model_h2", "model_h42"])
def test_stochastic_completeness(name, request):
    model = request.getfixturevalue(name)
    mass = hk.kernel_mass(model.spec)
    assert abs(mass - 1.0) <= 1e-3


def test_kernel_invariants(h1, model_h1):
    g, _ = controlled_points(h1, 30, 40, zhi=3.0, th_max=2.0)
    report = hk.check_kernel_invariants(model_h1, g, h=0.25)
    assert report["symmetry"] <= 1e-8
    assert report["scaling"] <= 1e-6


def test_scaling_identity_spot(h1, model_h1):
    g = GroupPoint([1.1, -0.4], [0.5])
    for h in (0.25, 4.0):
        lhs = model_h1(g, h)
        rhs = h ** (-0.5 * h1.Q) * model_h1(
            GroupPoint(g.x / np.sqrt(h), g.t / h), 1.0)
        assert abs(lhs - rhs) / rhs <= 1e-6


def test_heat_equation(h1, model_h1):
    # dp/dh = Delta p: independent structural validation of the evaluator
    g = GroupPoint(np.array([[1.2, 0.5], [0.3, -0.8]]), np.array([[0.4], [-0.2]]))
    dh = 1e-4
    dpdh = (np.atleast_1d(model_h1(g, 1 + dh)) - np.atleast_1d(model_h1(g, 1 - dh))) / (2 * dh)
    step = 1e-3
    lap = np.zeros(2)
    f0 = np.atleast_1d(model_h1(g, 1.0))
    for l in range(2):
        fp = np.atleast_1d(model_h1(hk._translated(h1, g, l, step), 1.0))
        fm = np.atleast_1d(model_h1(hk._translated(h1, g, l, -step), 1.0))
        lap += (fp - 2 * f0 + fm) / step ** 2
    assert np.max(np.abs(dpdh - lap) / np.abs(dpdh)) <= 1e-4


def test_comparator_heisenberg_values(h1):
    cv = hk.comparator_heisenberg(1, identity(h1))
    assert cv.value == 1.0
    # t = 0, |x| = d = 2, n = 1: (1+d)^0 (1+d^2)^(-1/2) e^(-1)
    cv = hk.comparator_heisenberg(1, GroupPoint([2.0, 0.0], [0.0]))
    assert abs(cv.value - 5 ** -0.5 * np.exp(-1)) <= 1e-12
    # monotone decay along a ray
    vals = [hk.comparator_heisenberg(1, GroupPoint([d, 0.0], [0.0]), d=d).value
            if False else
            hk.comparator_heisenberg(1, GroupPoint([d, 0.0], [0.0])).value
            for d in (1.0, 3.0, 6.0, 9.0)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_comparator_htype_values(h42):
    cv = hk.comparator_htype(2, 3, GroupPoint([1.0, 0, 0, 0], [0.0, 0, 0]))
    assert abs(cv.value - 2 ** -1.5 * np.exp(-0.25)) <= 1e-12
    cv = hk.comparator_htype(2, 2, identity(h42))
    assert cv.value == 1.0


def test_comparator_m1_reduces_to_heisenberg(h1):
    # with m = 1 the exponents coincide: (1+d)^{2n-2} both times
    g, _ = controlled_points(h1, 10, 41)
    d = cc_distance_batch(h1, g).distance
    a = hk.comparator_heisenberg(1, g, d=d)
    b = hk.comparator_htype(1, 1, g, d=d)
    np.testing.assert_allclose(np.asarray(a), np.asarray(b), rtol=1e-12)


def test_comparator_n32(n32spec):
    g = GroupPoint([1.0, 0, 0], [0.0, 0.5, 0.0])     # x perp t
    cv = hk.comparator_n32(g, epsilon=0.7)
    assert cv.pieces["T2"] == 0.5
    assert cv.pieces["mgap"] > 0
    with pytest.raises(DomainError):
        hk.comparator_n32(GroupPoint([1.0, 0, 0], [2.0, 0, 0]), epsilon=0.5)
    with pytest.raises(InputError):
        hk.comparator_n32(g, epsilon=0.0)
    # eps -> 0 limit approaches (1+d)^{-2} e^{-d^2/4}
    d = cv.d
    tiny = hk.comparator_n32(g, epsilon=1e-9, d=d)
    limit = (1 + d) ** -2 * np.exp(-d * d / 4)
    assert abs(tiny.value - limit) / limit <= 1e-6


def test_mgap_positive_on_smooth_set(n32spec):
    eta = geo.Covector(*[np.array(v) for v in
                         ([1.0, 0.3, -0.2], [0.4, 0.8, 0.1])])
    rng = np.random.default_rng(42)
    Z = rng.normal(size=(100, 3))
    Td = rng.normal(size=(100, 3))
    Td /= np.linalg.norm(Td, axis=1, keepdims=True)
    T = Td * rng.uniform(0.2, 1.6 * np.pi, size=(100, 1))
    x, t = geo._exp_xt(n32spec, Z, T)
    out = cc_distance_batch(n32spec, GroupPoint(x, t))
    from steptwo.groups import points_in_smooth_set

    sm = points_in_smooth_set(GroupPoint(x, t)) & out.ok
    r = np.linalg.norm(x[sm], axis=1)
    mgap = 0.25 * (out.distance[sm] ** 2 - r ** 2)
    assert np.all(mgap > 0)


def test_generic_bounds(h1, model_h1):
    up, lo = hk.generic_bounds(h1, identity(h1), 0.5, d=0.0)
    assert up == 1.0 and lo == 1.0
    with pytest.raises(InputError):
        hk.generic_bounds(h1, identity(h1), 1.5)
    # sandwich with finite empirical constants over d <= 8
    g, _ = controlled_points(h1, 60, 43, zhi=8.0, th_max=2.0)
    d = cc_distance_batch(h1, g).distance
    p = np.atleast_1d(model_h1(g))
    up, lo = hk.generic_bounds(h1, g, 0.5, d=d)
    c2 = np.max(p / up)
    c1 = np.min(p / lo)
    assert np.isfinite(c2) and c1 > 0
    # upper/lower ratio diverges with d
    res = [hk.generic_bounds(h1, GroupPoint([dd, 0.0], [0.0]), 0.5, d=dd)
           for dd in (2.0, 6.0, 10.0)]
    gaps = [u / l for u, l in res]
    assert gaps[0] < gaps[1] < gaps[2]


def test_comparator_band(h1, model_h1):
    g, _ = controlled_points(h1, 120, 44, zhi=8.0, th_max=2.6)
    d = cc_distance_batch(h1, g).distance
    p = np.atleast_1d(model_h1(g))
    comp = np.asarray(hk.comparator_heisenberg(1, g, d=d))
    ratio = p / comp
    assert np.all(np.isfinite(ratio)) and np.all(ratio > 0)
    band = np.max(ratio) / np.min(ratio)
    assert band < 50


def test_gradient_ratio_scan(model_h1):
    rep = hk.kernel_gradient_ratio_scan(model_h1, 400, seed=3, d_max=5.0)
    assert np.isfinite(rep.sup_ratio) and rep.sup_ratio > 0
    rep2 = hk.kernel_gradient_ratio_scan(model_h1, 150, seed=3, d_max=5.0, k=2)
    assert np.isfinite(rep2.sup_ratio)
    # gradient vanishes at the identity by inversion symmetry
    grad0 = hk.horizontal_gradient_fd(model_h1.spec, lambda p: model_h1(p, 1.0),
                                      GroupPoint(np.zeros((1, 2)), np.zeros((1, 1))))
    assert grad0[0] <= 1e-6


def test_small_time_jacobian(h1, model_h1):
    eta1 = Covector([1.5, 0.0], [0.4])
    eta2 = Covector([2.5, 0.5], [0.24])
    g1 = geo.exp_map(h1, eta1)
    g2 = geo.exp_map(h1, eta2)
    ratio, f1, f2 = hk.small_time_jacobian_ratio(h1, g1, g2, model_h1)
    fd = hk.fd_jacobian_ratio(h1, eta1, eta2)
    assert abs(ratio / fd - 1) <= 0.2
    assert abs(f1.exponent + 1.5) / 1.5 <= 0.05
    assert f1.value > 0
    # halving the smallest h moves the constant by < 2%
    f1b = hk.small_time_jacobian(h1, g1, model_h1, ks=range(4, 12))
    assert abs(np.exp(f1b.log_value - f1.log_value) - 1) <= 0.02


def test_comparator_model_n32(n32spec):
    model = hk.comparator_model(n32spec)
    assert model.kind == "comparator-only"
    g = GroupPoint([1.0, 0.2, -0.1], [0.1, 0.6, 0.2])
    v1 = model(g, 1.0)
    assert v1 > 0
    # scaling identity holds by construction
    h = 0.5
    vh = model(g, h)
    vs = h ** (-0.5 * n32spec.Q) * model(GroupPoint(g.x / np.sqrt(h), g.t / h), 1.0)
    assert abs(vh - vs) / vs <= 1e-12


def test_heuristic_epsilon_positive(n32spec):
    rng = np.random.default_rng(46)
    Z = rng.normal(size=(50, 3))
    Td = rng.normal(size=(50, 3))
    Td /= np.linalg.norm(Td, axis=1, keepdims=True)
    T = Td * rng.uniform(0.1, 1.8 * np.pi, size=(50, 1))
    x, t = geo._exp_xt(n32spec, Z, T)
    eps = hk.heuristic_epsilon(n32spec, GroupPoint(x, t))
    assert np.all(eps > 0)


def test_input_errors(h1, model_h1):
    with pytest.raises(InputError):
        hk.oscillatory_model(__import__("steptwo.groups", fromlist=["n32"]).n32())
    with pytest.raises(InputError):
        model_h1(identity(h1), -1.0)
    with pytest.raises(InputError):
        hk.kernel_heisenberg(GroupPoint([1.0, 0.0, 0.0], [0.0]))
