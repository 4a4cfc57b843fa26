import json

import numpy as np
import pytest

from steptwo import groups as G
from steptwo.errors import InputError
from steptwo.groups import GroupPoint

from conftest import rand_points

ALL_BUILTINS = [G.heisenberg(1), G.heisenberg(2), G.htype(4, 2), G.n32()]


def test_heisenberg_multiply_example(h1):
    out = G.multiply(h1, GroupPoint([1, 0], [0]), GroupPoint([0, 1], [0]))
    np.testing.assert_allclose(out.x, [1, 1])
    np.testing.assert_allclose(out.t, [0.5])


def test_identity_neutral(h1):
    g = GroupPoint([0.3, -1.2], [0.7])
    out = G.multiply(h1, g, G.identity(h1))
    np.testing.assert_array_equal(out.x, g.x)
    np.testing.assert_array_equal(out.t, g.t)


def test_n32_multiply_cross_product(n32spec):
    out = G.multiply(n32spec, GroupPoint([1, 0, 0], [0, 0, 0]),
                     GroupPoint([0, 1, 0], [0, 0, 0]))
    np.testing.assert_allclose(out.x, [1, 1, 0])
    np.testing.assert_allclose(out.t, [0, 0, -0.5])


def test_inverse_examples(h1):
    g = GroupPoint([1, 1], [0.5])
    gi = G.inverse(h1, g)
    np.testing.assert_allclose(gi.x, [-1, -1])
    np.testing.assert_allclose(gi.t, [-0.5])
    prod = G.multiply(h1, g, gi)
    assert np.max(np.abs(prod.x)) == 0 and np.max(np.abs(prod.t)) == 0


@pytest.mark.parametrize("spec", ALL_BUILTINS, ids=lambda s: s.name)
def test_group_axioms_random(spec):
    a = rand_points(spec, 1000, 1)
    b = rand_points(spec, 1000, 2)
    c = rand_points(spec, 1000, 3)
    lhs = G.multiply(spec, G.multiply(spec, a, b), c)
    rhs = G.multiply(spec, a, G.multiply(spec, b, c))
    assert np.max(np.abs(lhs.x - rhs.x)) <= 1e-12
    assert np.max(np.abs(lhs.t - rhs.t)) <= 1e-12

    ginv = G.multiply(spec, a, G.inverse(spec, a))
    assert np.max(np.abs(ginv.x)) <= 1e-14
    assert np.max(np.abs(ginv.t)) <= 1e-14

    # (ab)^{-1} = b^{-1} a^{-1}
    lhs = G.inverse(spec, G.multiply(spec, a, b))
    rhs = G.multiply(spec, G.inverse(spec, b), G.inverse(spec, a))
    assert np.max(np.abs(lhs.x - rhs.x)) <= 1e-13
    assert np.max(np.abs(lhs.t - rhs.t)) <= 1e-13


def test_dilation_examples(h1):
    out = G.dilate(h1, 3.0, GroupPoint([1, 2], [5]))
    np.testing.assert_allclose(out.x, [3, 6])
    np.testing.assert_allclose(out.t, [45])
    same = G.dilate(h1, 1.0, GroupPoint([1, 2], [5]))
    np.testing.assert_array_equal(same.x, [1, 2])
    with pytest.raises(InputError):
        G.dilate(h1, -1.0, GroupPoint([1, 2], [5]))
    with pytest.raises(InputError):
        G.dilate(h1, 0.0, GroupPoint([1, 2], [5]))


@pytest.mark.parametrize("spec", ALL_BUILTINS, ids=lambda s: s.name)
def test_dilation_automorphism_and_composition(spec):
    rng = np.random.default_rng(5)
    a = rand_points(spec, 500, 6)
    b = rand_points(spec, 500, 7)
    r = rng.uniform(0.2, 3.0, 500)
    lhs = G.dilate(spec, r, G.multiply(spec, a, b))
    rhs = G.multiply(spec, G.dilate(spec, r, a), G.dilate(spec, r, b))
    assert np.max(np.abs(lhs.x - rhs.x)) <= 1e-12
    assert np.max(np.abs(lhs.t - rhs.t)) <= 1e-12

    s = rng.uniform(0.2, 3.0, 500)
    two = G.dilate(spec, s, G.dilate(spec, r, a))
    one = G.dilate(spec, r * s, a)
    assert np.max(np.abs(two.x - one.x)) <= 1e-13
    assert np.max(np.abs(two.t - one.t)) <= 1e-13


def test_homogeneous_norm(h1):
    assert G.homogeneous_norm(h1, G.identity(h1)) == 0.0
    assert G.homogeneous_norm(h1, GroupPoint([3, 4], [0])) == 5.0
    rng = np.random.default_rng(8)
    g = rand_points(h1, 200, 9)
    r = rng.uniform(0.3, 2.5, 200)
    lhs = G.homogeneous_norm(h1, G.dilate(h1, r, g))
    rhs = r * G.homogeneous_norm(h1, g)
    assert np.max(np.abs(lhs - rhs) / rhs) <= 1e-12


def test_frame_at_identity(h42):
    fr = G.horizontal_frame(h42, G.identity(h42))
    np.testing.assert_array_equal(fr[:, : h42.q], np.eye(4))
    np.testing.assert_array_equal(fr[:, h42.q:], np.zeros((4, 2)))


def test_frame_heisenberg_vertical_parts(h1):
    # With the group law fixed by the multiply example above, the H^1 tuple
    # is [[0,-1],[1,0]], so X_1 has vertical part -x2/2 and X_2 has +x1/2.
    g = GroupPoint([0.7, 2.0], [0.0])
    fr = G.horizontal_frame(h1, g)
    np.testing.assert_allclose(fr[0, 2], -0.5 * 2.0)
    np.testing.assert_allclose(fr[1, 2], 0.5 * 0.7)
    # directional derivative of f(x,t) = t1 along X_1 at ((0,2),0)
    val = fr[0, 2]
    np.testing.assert_allclose(val, -1.0)


@pytest.mark.parametrize("spec", ALL_BUILTINS, ids=lambda s: s.name)
def test_frame_left_invariance(spec):
    # X_l f(g0 . g)|_{g=o} (finite difference in g along the frame at o)
    # must equal (X_l f)(g0) computed from the frame at g0.
    rng = np.random.default_rng(11)
    w = rng.normal(size=spec.q + spec.m)

    def f(pt):
        z = np.concatenate([pt.x, pt.t], axis=-1)
        return np.sin(z @ w) + 0.3 * (z @ w) ** 2

    g0 = GroupPoint(rng.normal(size=spec.q), rng.normal(size=spec.m))
    fr = G.horizontal_frame(spec, g0)
    grad_full = np.concatenate([np.zeros(spec.q), np.zeros(spec.m)])
    z0 = np.concatenate([g0.x, g0.t])
    grad_f = (np.cos(z0 @ w) + 0.6 * (z0 @ w)) * w
    analytic = fr @ grad_f

    eps = 1e-6
    for l in range(spec.q):
        shift = np.zeros(spec.q)
        shift[l] = eps
        fp = f(G.multiply(spec, g0, GroupPoint(shift, np.zeros(spec.m))))
        fm = f(G.multiply(spec, g0, GroupPoint(-shift, np.zeros(spec.m))))
        fd = (fp - fm) / (2 * eps)
        assert abs(fd - analytic[l]) <= 1e-6 * max(1.0, abs(analytic[l]))


def test_spec_validation():
    with pytest.raises(InputError):
        G.custom_spec(np.array([[[0.0, 1.0], [1.0, 0.0]]]))  # not skew
    dep = np.array([[[0.0, 1.0], [-1.0, 0.0]], [[0.0, 2.0], [-2.0, 0.0]]])
    with pytest.raises(InputError):
        G.custom_spec(dep)  # linearly dependent
    with pytest.raises(InputError):
        G.heisenberg(0)
    with pytest.raises(InputError):
        G.htype(4, 4)  # m >= rho(4)
    with pytest.raises(InputError):
        G.htype(3, 1)  # odd q
    assert G.hurwitz_radon(4) == 4
    assert G.hurwitz_radon(8) == 8
    assert G.hurwitz_radon(16) == 9


@pytest.mark.parametrize("spec", ALL_BUILTINS, ids=lambda s: s.name)
def test_spec_invariants(spec):
    assert spec.Q == spec.q + 2 * spec.m
    skew = np.max(np.abs(spec.U + np.transpose(spec.U, (0, 2, 1))))
    assert skew == 0.0
    assert np.linalg.matrix_rank(spec.U.reshape(spec.m, -1)) == spec.m


def test_htype_identities(h42):
    U = h42.U
    for j in range(2):
        np.testing.assert_allclose(U[j].T @ U[j], np.eye(4), atol=1e-12)
    np.testing.assert_allclose(U[0] @ U[1] + U[1] @ U[0], np.zeros((4, 4)),
                               atol=1e-12)
    assert h42.is_htype


def test_json_roundtrip(h42):
    text = h42.to_json()
    data = json.loads(text)
    assert data["q"] == 4 and data["m"] == 2
    back = G.GroupSpec.from_json(text)
    np.testing.assert_array_equal(back.U, h42.U)
    assert back.name == h42.name


def test_dimension_mismatch(h1, n32spec):
    with pytest.raises(InputError):
        G.multiply(h1, GroupPoint([1, 0, 0], [0, 0, 0]), GroupPoint([0, 1], [0]))
    with pytest.raises(InputError):
        G.homogeneous_norm(n32spec, GroupPoint([1, 0], [0]))


def test_polar_vertical_components(n32spec):
    T1, T2 = G.polar_vertical_components(GroupPoint([1.0, 0, 0], [0.0, 2.0, 0]))
    assert abs(T1) <= 1e-15 and abs(T2 - 2.0) <= 1e-15
    T1, T2 = G.polar_vertical_components(GroupPoint([2.0, 0, 0], [3.0, 4.0, 0]))
    np.testing.assert_allclose(T1, 3.0)
    np.testing.assert_allclose(T2, 4.0)
