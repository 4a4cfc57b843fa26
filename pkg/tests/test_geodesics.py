import numpy as np
import pytest
import scipy.linalg as sla
from scipy.integrate import solve_ivp

from steptwo import geodesics as geo
from steptwo import groups as G
from steptwo.distance import cc_distance_batch
from steptwo.errors import InputError
from steptwo.geodesics import Covector
from steptwo.groups import GroupPoint


def ode_exp(spec, zeta, tau, s=1.0):
    """Brute-force geodesic integration, the independent oracle for exp."""
    Om = np.einsum("j,jkl->kl", tau, spec.U)

    def rhs(u, y):
        x = y[: spec.q]
        xd = sla.expm(u * Om) @ zeta
        td = 0.5 * np.einsum("jkl,l,k->j", spec.U, x, xd)
        return np.concatenate([xd, td])

    sol = solve_ivp(rhs, [0, s], np.zeros(spec.q + spec.m),
                    rtol=1e-12, atol=1e-14)
    return sol.y[: spec.q, -1], sol.y[spec.q:, -1]


def h1_jacobian_exact(zeta, theta):
    """Closed-form H^1 Jacobian |zeta|^2 sin(th)(sin(th) - th cos(th)) / (4 th^4)."""
    zn2 = float(np.sum(np.square(zeta)))
    if abs(theta) < 1e-8:
        return zn2 / 6.0
    return zn2 * np.sin(theta) * (np.sin(theta) - theta * np.cos(theta)) / (4 * theta ** 4)


def test_exp_straight_lines(h1, n32spec):
    for spec, z in ((h1, [1.3, -0.4]), (n32spec, [0.5, 1.0, -2.0])):
        g = geo.exp_map(spec, Covector(z, np.zeros(spec.m)))
        np.testing.assert_allclose(g.x, z)
        np.testing.assert_array_equal(g.t, np.zeros(spec.m))


def test_exp_h1_closed_form(h1):
    g = geo.exp_map(h1, Covector([1.0, 0.0], [np.pi]))
    # the group law fixed by the multiply example forces x = (0, +2/pi)
    np.testing.assert_allclose(g.x, [0.0, 2.0 / np.pi], atol=1e-14)
    np.testing.assert_allclose(g.t, [1.0 / (2.0 * np.pi)], atol=1e-14)


def test_exp_sinc_identity(h1):
    rng = np.random.default_rng(0)
    for _ in range(20):
        th = rng.uniform(1e-3, np.pi - 1e-3)
        zeta = rng.normal(size=2)
        g = geo.exp_map(h1, Covector(zeta, [2 * th]))
        pred = np.sin(th) / th * np.linalg.norm(zeta)
        assert abs(np.linalg.norm(g.x) - pred) / pred <= 1e-8


@pytest.mark.parametrize("name", ["h1", "h42", "n32spec"])
def test_exp_against_ode_oracle(name, request):
    spec = request.getfixturevalue(name)
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = rng.normal(size=spec.q)
        tau = rng.normal(size=spec.m) * 2.0
        x_ref, t_ref = ode_exp(spec, z, tau)
        g = geo.exp_map(spec, Covector(z, tau))
        assert np.max(np.abs(g.x - x_ref)) <= 1e-10
        assert np.max(np.abs(g.t - t_ref)) <= 1e-10


def test_exp_scaled(h1):
    eta = Covector([1.2, 0.4], [1.5])
    g1 = geo.exp_scaled(h1, eta, 1.0)
    g2 = geo.exp_map(h1, eta)
    np.testing.assert_allclose(g1.x, g2.x)
    np.testing.assert_allclose(g1.t, g2.t)
    tiny = geo.exp_scaled(h1, eta, 1e-6)
    assert G.homogeneous_norm(h1, tiny) <= 1e-5
    with pytest.raises(InputError):
        geo.exp_scaled(h1, eta, 0.0)
    with pytest.raises(InputError):
        geo.exp_scaled(h1, eta, 1.2)


def test_exp_scaled_distance_linear(h1):
    rng = np.random.default_rng(4)
    for _ in range(5):
        zeta = rng.normal(size=2)
        zeta *= rng.uniform(0.5, 3.0) / np.linalg.norm(zeta)
        eta = Covector(zeta, [rng.uniform(-1.8 * np.pi, 1.8 * np.pi)])
        for s in (0.3, 0.7, 1.0):
            g = geo.exp_scaled(h1, eta, s)
            d = cc_distance_batch(h1, GroupPoint(g.x[None], g.t[None])).distance[0]
            target = s * np.linalg.norm(zeta)
            assert abs(d - target) / target <= 1e-6


def test_jacobian_h1_exact_oracle(h1):
    rng = np.random.default_rng(5)
    for _ in range(15):
        th = rng.uniform(-2.9, 2.9)
        zeta = rng.normal(size=2) * rng.uniform(0.5, 3.0)
        jac = geo.jacobian_exp(h1, Covector(zeta, [2 * th]))
        exact = h1_jacobian_exact(zeta, th)
        assert abs(jac - exact) / exact <= 1e-6
        assert jac > 0


def test_jacobian_positive_on_domain(h42):
    rng = np.random.default_rng(6)
    Z = rng.normal(size=(200, 4))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    Z *= rng.uniform(0.3, 4.0, size=(200, 1))
    Td = rng.normal(size=(200, 2))
    Td /= np.linalg.norm(Td, axis=1, keepdims=True)
    T = Td * rng.uniform(0.0, 2 * np.pi - 1e-3, size=(200, 1))
    dets = geo._jacobian_batch(h42, Z, T)
    assert np.all(dets > 0)


def test_jacobian_scaling_law(n32spec, h42):
    # Jac(r zeta, tau) = r^{2m} Jac(zeta, tau): exact block structure identity
    rng = np.random.default_rng(7)
    for spec in (n32spec, h42):
        for _ in range(5):
            z = rng.normal(size=spec.q)
            tau = rng.normal(size=spec.m)
            j1 = geo._jacobian_batch(spec, z[None], tau[None])[0]
            for r in (0.5, 2.0):
                j2 = geo._jacobian_batch(spec, (r * z)[None], tau[None])[0]
                assert abs(j2 / (r ** (2 * spec.m) * j1) - 1) <= 1e-6


def test_complex_step_matches_fd(h1, h42, n32spec):
    rng = np.random.default_rng(8)
    for spec in (h1, h42, n32spec):
        Z = rng.normal(size=(40, spec.q))
        T = rng.normal(size=(40, spec.m))
        a = geo._jacobian_cstep(spec, Z, T)
        b = geo._jacobian_batch(spec, Z, T)
        assert np.max(np.abs(a / b - 1)) <= 1e-5


def test_in_domain(h1, n32spec):
    assert geo.in_domain(h1, Covector([1, 0], [np.pi]))
    assert not geo.in_domain(h1, Covector([1, 0], [2 * np.pi]))
    assert not geo.in_domain(h1, Covector([0, 0], [1.0]))
    assert geo.in_domain(n32spec, Covector([1.0, 0.2, -0.3], [0.5, 1.0, 0.2]))
    assert not geo.in_domain(n32spec, Covector([0.1, 0.02, -0.03], [0.5, 5.0, 4.0]))


def test_scaling_jacobian_factor():
    assert geo.scaling_jacobian_factor(2, 1, 1.0) == 1.0
    assert abs(geo.scaling_jacobian_factor(2, 1, 0.5) - 0.5) <= 1e-15
    with pytest.raises(InputError):
        geo.scaling_jacobian_factor(2, 1, 0.0)

    # finite-difference oracle for the radial-correction map
    rng = np.random.default_rng(9)
    for q, m in ((2, 1), (3, 3)):
        z = rng.normal(size=q)
        tau = rng.normal(size=m)
        eta0 = np.concatenate([z, tau])
        s = rng.uniform(0.3, 0.95)
        i_par = (1 - s) * np.linalg.norm(z) ** 3

        def gamma(e):
            zn = np.linalg.norm(e[:q])
            return (1.0 - i_par / zn ** 3) * e

        n = q + m
        h = 1e-6
        J = np.zeros((n, n))
        for k in range(n):
            ep, em = eta0.copy(), eta0.copy()
            ep[k] += h
            em[k] -= h
            J[:, k] = (gamma(ep) - gamma(em)) / (2 * h)
        fd = np.linalg.det(J)
        closed = geo.scaling_jacobian_factor(q, m, s)
        assert abs(fd / closed - 1) <= 1e-6


def test_endpoint_rotation_symmetry(h2):
    # |x| of the endpoint depends on (|zeta|, |tau|) only
    rng = np.random.default_rng(10)
    tau = [1.3]
    base = rng.normal(size=4)
    base /= np.linalg.norm(base)
    ref = np.linalg.norm(geo.exp_map(h2, Covector(1.7 * base, tau)).x)
    for _ in range(10):
        v = rng.normal(size=4)
        v /= np.linalg.norm(v)
        out = np.linalg.norm(geo.exp_map(h2, Covector(1.7 * v, tau)).x)
        assert abs(out - ref) <= 1e-8


def test_geodesic_result(h1):
    res = geo.evaluate_geodesic(h1, Covector([1.0, 0.5], [1.0]))
    assert res.in_domain and res.jacobian > 0
    assert abs(res.length - np.linalg.norm([1.0, 0.5])) <= 1e-15
    doc = res.to_jsonable()
    assert set(doc) == {"endpoint", "jacobian", "in_domain", "length"}


def test_dimension_check(h1):
    with pytest.raises(InputError):
        geo.exp_map(h1, Covector([1.0, 0.0, 0.0], [0.5]))
