"""Exact algebra of step-two Carnot groups.

A step-two Carnot group is R^q x R^m with the product

    (x, t) . (x', t') = (x + x', t + t' + 1/2 <Ux, x'>),

where U = (U^(1), ..., U^(m)) is an m-tuple of linearly independent
skew-symmetric q x q matrices and <Ux, x'>_j = <U^(j) x, x'>.  Everything
downstream (geodesics, distances, kernels) is driven by the tuple U, so the
group is represented by a single immutable `GroupSpec`.

Built-in constructors:

* ``heisenberg(n)``  -- q = 2n, m = 1, U made of 2x2 blocks [[0,-1],[1,0]],
  which reproduces t + t' + 1/2 sum_j (x_{2j-1} x'_{2j} - x_{2j} x'_{2j-1}).
* ``htype(q, m)``    -- orthogonal, pairwise anticommuting U (H-type).
* ``n32()``          -- the free group with three generators, q = m = 3,
  whose vertical part is t + t' - 1/2 x `cross` x'.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

SKEW_TOL = 1e-12

# 2x2 generators used by the built-in constructors.  _J2 is skew with
# _J2^2 = -I; _K2, _L2 are symmetric involutions anticommuting with _J2.
_J2 = np.array([[0.0, -1.0], [1.0, 0.0]])
_K2 = np.array([[0.0, 1.0], [1.0, 0.0]])
_L2 = np.array([[1.0, 0.0], [0.0, -1.0]])
_I2 = np.eye(2)


def hurwitz_radon(q):
    """Hurwitz-Radon number rho(q) = 8k + 2^l for q = odd * 2^(4k+l)."""
    if q <= 0:
        raise InputError("q must be positive")
    e = 0
    while q % 2 == 0:
        q //= 2
        e += 1
    return 8 * (e // 4) + 2 ** (e % 4)


@dataclass(frozen=True)
class GroupSpec:
    """Immutable description of a step-two Carnot group.

    Attributes:
        q: horizontal dimension.
        m: vertical dimension.
        U: array of shape (m, q, q) stacking the skew-symmetric matrices.
        name: label, e.g. ``heisenberg(1)``, ``htype(4,2)``, ``n32``.
    """

    q: int
    m: int
    U: np.ndarray
    name: str = "custom"
    is_htype: bool = field(init=False)
    is_cross: bool = field(init=False)

    def __post_init__(self):
        U = np.array(self.U, dtype=float)
        if U.shape != (self.m, self.q, self.q):
            raise InputError(
                f"U must have shape ({self.m}, {self.q}, {self.q}), got {U.shape}"
            )
        skew_defect = np.max(np.abs(U + np.transpose(U, (0, 2, 1))))
        if skew_defect > SKEW_TOL:
            raise InputError(f"U matrices not skew-symmetric (defect {skew_defect:g})")
        if np.linalg.matrix_rank(U.reshape(self.m, -1)) != self.m:
            raise InputError("U matrices are linearly dependent")
        U.setflags(write=False)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "is_htype", self._check_htype(U))
        object.__setattr__(self, "is_cross", self._check_cross(U))
        if self.name.startswith("htype") or self.name.startswith("heisenberg"):
            if not self.is_htype:
                raise InputError(f"spec named {self.name!r} fails the H-type identities")

    @staticmethod
    def _check_htype(U):
        m, q = U.shape[0], U.shape[1]
        eye = np.eye(q)
        for j in range(m):
            if np.max(np.abs(U[j].T @ U[j] - eye)) > SKEW_TOL:
                return False
        for i in range(m):
            for j in range(i + 1, m):
                if np.max(np.abs(U[i] @ U[j] + U[j] @ U[i])) > SKEW_TOL:
                    return False
        return True

    @staticmethod
    def _check_cross(U):
        # <U^(j) x, x'> = -(x cross x')_j, i.e. the standard n32 tuple.
        if U.shape != (3, 3, 3):
            return False
        ref = np.stack([-_cross_matrix(e) for e in np.eye(3)])
        return bool(np.max(np.abs(U - ref)) <= SKEW_TOL)

    @property
    def Q(self):
        """Homogeneous dimension q + 2m."""
        return self.q + 2 * self.m

    def to_json(self):
        return json.dumps(
            {"q": self.q, "m": self.m, "U": self.U.tolist(), "name": self.name}
        )

    @classmethod
    def from_json(cls, text):
        data = json.loads(text)
        return cls(q=int(data["q"]), m=int(data["m"]), U=np.array(data["U"]),
                   name=data.get("name", "custom"))


def heisenberg(n):
    """Heisenberg group H^n: q = 2n, m = 1."""
    if n < 1:
        raise InputError("n must be >= 1")
    U = np.zeros((1, 2 * n, 2 * n))
    for j in range(n):
        U[0, 2 * j: 2 * j + 2, 2 * j: 2 * j + 2] = _J2
    return GroupSpec(q=2 * n, m=1, U=U, name=f"heisenberg({n})")


def htype(q, m):
    """H-type group H(q, m) with orthogonal pairwise-anticommuting U.

    m = 1 reduces to the Heisenberg layout; m in {2, 3} uses 4x4
    quaternionic blocks (q must be a multiple of 4).  Higher m would need
    larger Clifford modules and is not provided.
    """
    if q % 2 != 0 or q < 2:
        raise InputError("q must be even and >= 2")
    if not 1 <= m < hurwitz_radon(q):
        raise InputError(f"need 1 <= m < rho({q}) = {hurwitz_radon(q)}")
    if m == 1:
        spec = heisenberg(q // 2)
        return GroupSpec(q=q, m=1, U=spec.U, name=f"htype({q},1)")
    if m > 3:
        raise InputError("htype constructor supports m <= 3")
    if q % 4 != 0:
        raise InputError("m >= 2 requires q divisible by 4")
    gens = [np.kron(_J2, _I2), np.kron(_K2, _J2), np.kron(_L2, _J2)][:m]
    U = np.zeros((m, q, q))
    for j, g in enumerate(gens):
        for b in range(q // 4):
            U[j, 4 * b: 4 * b + 4, 4 * b: 4 * b + 4] = g
    return GroupSpec(q=q, m=m, U=U, name=f"htype({q},{m})")


def _cross_matrix(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def n32():
    """Free step-two group with three generators: <U^(j) x, x'> = -(x cross x')_j."""
    U = np.stack([-_cross_matrix(e) for e in np.eye(3)])
    return GroupSpec(q=3, m=3, U=U, name="n32")


def custom_spec(U, name="custom"):
    U = np.asarray(U, dtype=float)
    if U.ndim != 3 or U.shape[1] != U.shape[2]:
        raise InputError("U must be a stack of square matrices, shape (m, q, q)")
    return GroupSpec(q=U.shape[1], m=U.shape[0], U=U, name=name)


@dataclass(frozen=True)
class GroupPoint:
    """Element g = (x, t).  Arrays may carry leading batch dimensions."""

    x: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float))

    @property
    def batch_shape(self):
        return self.x.shape[:-1]

    def reshape(self, shape):
        return GroupPoint(self.x.reshape(shape + (self.x.shape[-1],)),
                          self.t.reshape(shape + (self.t.shape[-1],)))

    def __getitem__(self, idx):
        return GroupPoint(self.x[idx], self.t[idx])


def identity(spec, batch_shape=()):
    return GroupPoint(np.zeros(batch_shape + (spec.q,)), np.zeros(batch_shape + (spec.m,)))


def _check_dims(spec, *points):
    for g in points:
        if g.x.shape[-1] != spec.q or g.t.shape[-1] != spec.m:
            raise InputError(
                f"point dims ({g.x.shape[-1]}, {g.t.shape[-1]}) do not match "
                f"spec ({spec.q}, {spec.m})"
            )


def bracket(spec, xa, xb):
    """<U xa, xb> in R^m, batched over leading dimensions."""
    return np.einsum("jkl,...l,...k->...j", spec.U, xa, xb)


def multiply(spec, a, b):
    """Group product a . b = (xa + xb, ta + tb + 1/2 <U xa, xb>)."""
    _check_dims(spec, a, b)
    return GroupPoint(a.x + b.x, a.t + b.t + 0.5 * bracket(spec, a.x, b.x))


def inverse(spec, g):
    """g^{-1} = (-x, -t); skew-symmetry kills the bracket."""
    _check_dims(spec, g)
    return GroupPoint(-g.x, -g.t)


def dilate(spec, r, g):
    """Anisotropic dilation delta_r(x, t) = (r x, r^2 t), r > 0."""
    _check_dims(spec, g)
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise InputError("dilation factor must be positive")
    return GroupPoint(r[..., None] * g.x if r.ndim else r * g.x,
                      (r ** 2)[..., None] * g.t if r.ndim else r ** 2 * g.t)


def homogeneous_norm(spec, g):
    """(|x|^2 + |t|)^(1/2); homogeneous of order 1 under `dilate`."""
    _check_dims(spec, g)
    return np.sqrt(np.sum(g.x ** 2, axis=-1) + np.linalg.norm(g.t, axis=-1))


def horizontal_frame(spec, g):
    """Left-invariant horizontal frame at g.

    Returns an array of shape (..., q, q + m); row l is the coordinate
    expression of X_l(g): horizontal part e_l, vertical part
    1/2 (U^(j) x)_l for j = 1..m.
    """
    _check_dims(spec, g)
    batch = g.x.shape[:-1]
    frame = np.zeros(batch + (spec.q, spec.q + spec.m))
    frame[..., :, : spec.q] = np.eye(spec.q)
    frame[..., :, spec.q:] = 0.5 * np.einsum("jlk,...k->...lj", spec.U, g.x)
    return frame


def polar_vertical_components(g):
    """(T1, T2): components of t parallel/orthogonal to x.

    T1 = |t| cos(angle(x, t)) = <x, t>/|x|, T2 = sqrt(|t|^2 - T1^2).
    Defined for q = m (both in R^3 for the three-generator group); T1 = 0
    when x = 0.
    """
    nx = np.linalg.norm(g.x, axis=-1)
    nt = np.linalg.norm(g.t, axis=-1)
    dot = np.sum(g.x * g.t, axis=-1)
    T1 = np.where(nx > 0, dot / np.where(nx > 0, nx, 1.0), 0.0)
    T2 = np.sqrt(np.maximum(nt ** 2 - T1 ** 2, 0.0))
    return T1, T2


def points_in_smooth_set(g, tol=1e-12):
    """True where x and t are linearly independent: |x|^2 |t|^2 != <x,t>^2."""
    nx2 = np.sum(g.x ** 2, axis=-1)
    nt2 = np.sum(g.t ** 2, axis=-1)
    dot = np.sum(g.x * g.t, axis=-1)
    return nx2 * nt2 - dot ** 2 > tol * np.maximum(nx2 * nt2, 1e-300)
