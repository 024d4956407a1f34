"""Minkowski space, the Poincare group and its Lie algebra.

Group elements (g, xi) are realized as (d+2) x (d+2) matrices

    [[g, xi],
     [0,  1]]

and algebra elements as matrices with zero last row, a symmetric boost
block, an antisymmetric rotation block and a translation column.  Graded
coordinates use the canonical slot order

    (u_1..u_d, u_0, u_ij for i<j lexicographic, u_10..u_d0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .errors import InvalidParams, NonConvergent

D_MIN, D_MAX = 2, 6
GROUP_TOL = 1e-10


def check_dim(d: int) -> int:
    d = int(d)
    if not D_MIN <= d <= D_MAX:
        raise InvalidParams(f"dimension d must be in [{D_MIN}, {D_MAX}], got {d}")
    return d


def n_slots(d: int) -> int:
    return 2 * d + 1 + d * (d - 1) // 2


def eta(d: int) -> np.ndarray:
    return np.diag([1.0] + [-1.0] * d)


def minkowski_q(xi) -> float:
    xi = np.asarray(xi, dtype=float)
    return float(xi[0] ** 2 - np.sum(xi[1:] ** 2))


def minkowski_dot(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(a[0] * b[0] - np.dot(a[1:], b[1:]))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class AlgebraElement:
    """Element of the Poincare algebra in graded coordinates."""

    coords: np.ndarray
    d: int

    def __post_init__(self):
        d = check_dim(self.d)
        c = _frozen(self.coords).reshape(-1)
        if c.size != n_slots(d):
            raise InvalidParams(f"expected {n_slots(d)} coordinates for d={d}, got {c.size}")
        if not np.all(np.isfinite(c)):
            raise InvalidParams("algebra coordinates must be finite")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "d", d)

    def __eq__(self, other):
        return (isinstance(other, AlgebraElement) and other.d == self.d
                and np.array_equal(other.coords, self.coords))

    def __repr__(self):
        return f"AlgebraElement(d={self.d}, coords={np.array2string(self.coords, precision=6)})"

    @property
    def first_layer(self) -> np.ndarray:
        return self.coords[: self.d]

    @property
    def time_translation(self) -> float:
        return float(self.coords[self.d])

    @property
    def rotation(self) -> np.ndarray:
        d = self.d
        r = np.zeros((d, d))
        iu = np.triu_indices(d, 1)
        vals = self.coords[d + 1 : d + 1 + d * (d - 1) // 2]
        r[iu] = vals
        r[(iu[1], iu[0])] = -vals
        return r

    @property
    def space_translation(self) -> np.ndarray:
        return self.coords[n_slots(self.d) - self.d :]

    def vector(self) -> np.ndarray:
        return self.coords.copy()

    def matrix(self) -> np.ndarray:
        M = np.empty((self.d + 2, self.d + 2))
        K.coords_to_matrix(self.coords, self.d, M)
        return M

    @classmethod
    def from_vector(cls, v, d: int | None = None) -> "AlgebraElement":
        v = np.asarray(v, dtype=float).reshape(-1)
        if d is None:
            d = dim_from_slots(v.size)
        return cls(v, d)

    @classmethod
    def from_matrix(cls, M, tol: float = 1e-9) -> "AlgebraElement":
        M = np.asarray(M, dtype=float)
        d = M.shape[0] - 2
        check_dim(d)
        scale = max(1.0, float(np.abs(M).max()))
        inner = M[1 : d + 1, 1 : d + 1]
        bad = (abs(M[0, 0]) > tol * scale or np.abs(M[-1]).max() > tol * scale
               or np.abs(M[0, 1 : d + 1] - M[1 : d + 1, 0]).max() > tol * scale
               or np.abs(inner + inner.T).max() > tol * scale)
        if bad:
            raise InvalidParams("matrix is not in the Poincare algebra")
        u = np.empty(n_slots(d))
        K.matrix_to_coords(M, d, u)
        return cls(u, d)

    @classmethod
    def zero(cls, d: int) -> "AlgebraElement":
        return cls(np.zeros(n_slots(d)), d)

    def __add__(self, other: "AlgebraElement") -> "AlgebraElement":
        _same_dim(self, other)
        return AlgebraElement(self.coords + other.coords, self.d)

    def __sub__(self, other: "AlgebraElement") -> "AlgebraElement":
        _same_dim(self, other)
        return AlgebraElement(self.coords - other.coords, self.d)

    def __neg__(self) -> "AlgebraElement":
        return AlgebraElement(-self.coords, self.d)

    def __mul__(self, s: float) -> "AlgebraElement":
        return AlgebraElement(float(s) * self.coords, self.d)

    __rmul__ = __mul__


def dim_from_slots(n: int) -> int:
    for d in range(D_MIN, D_MAX + 1):
        if n_slots(d) == n:
            return d
    raise InvalidParams(f"{n} coordinates do not match any supported dimension")


def _same_dim(a, b):
    if a.d != b.d:
        raise InvalidParams(f"dimension mismatch: {a.d} vs {b.d}")


@dataclass(frozen=True, eq=False)
class GroupElement:
    """Pair (g, xi) with g in SO0(1,d) and xi in R^{1,d}."""

    lorentz: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        g = _frozen(self.lorentz)
        xi = _frozen(self.translation).reshape(-1)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or xi.size != g.shape[0]:
            raise InvalidParams("inconsistent shapes for (g, xi)")
        check_dim(g.shape[0] - 1)
        if not (np.all(np.isfinite(g)) and np.all(np.isfinite(xi))):
            raise InvalidParams("group element must be finite")
        object.__setattr__(self, "lorentz", g)
        object.__setattr__(self, "translation", xi)
        drift = lorentz_defect(g)
        if drift > GROUP_TOL:
            raise InvalidParams(f"g is not a Lorentz matrix (defect {drift:.2e})")
        if g[0, 0] < 1.0 - GROUP_TOL:
            raise InvalidParams("g is not orthochronous")

    @property
    def d(self) -> int:
        return self.lorentz.shape[0] - 1

    def __eq__(self, other):
        return (isinstance(other, GroupElement)
                and np.array_equal(self.lorentz, other.lorentz)
                and np.array_equal(self.translation, other.translation))

    def __repr__(self):
        return f"GroupElement(d={self.d}, xi={np.array2string(self.translation, precision=6)})"

    def matrix(self) -> np.ndarray:
        d = self.d
        M = np.zeros((d + 2, d + 2))
        M[: d + 1, : d + 1] = self.lorentz
        M[: d + 1, d + 1] = self.translation
        M[d + 1, d + 1] = 1.0
        return M

    @classmethod
    def from_matrix(cls, M) -> "GroupElement":
        M = np.asarray(M, dtype=float)
        d = M.shape[0] - 2
        if np.abs(M[d + 1, : d + 1]).max() > 1e-12 or abs(M[d + 1, d + 1] - 1.0) > 1e-12:
            raise InvalidParams("last row must be (0, ..., 0, 1)")
        return cls(M[: d + 1, : d + 1], M[: d + 1, d + 1])

    @classmethod
    def identity(cls, d: int) -> "GroupElement":
        d = check_dim(d)
        return cls(np.eye(d + 1), np.zeros(d + 1))

    def velocity(self) -> np.ndarray:
        """g e0, a point of the upper hyperboloid."""
        return self.lorentz[:, 0].copy()


def lorentz_defect(g: np.ndarray) -> float:
    """Scale-relative invariant defect max|g^T eta g - eta| / max(1, max|g|^2)."""
    g = np.asarray(g, dtype=float)
    e = eta(g.shape[0] - 1)
    return float(np.abs(g.T @ e @ g - e).max() / max(1.0, float(np.abs(g).max()) ** 2))


def basis_element(kind: str, d: int, i: int | None = None, j: int | None = None) -> AlgebraElement:
    """E_i ('first'), E_0 ('time'), E_ij ('rotation'), E_i0 ('boostdrift'); 1-based indices."""
    d = check_dim(d)
    u = np.zeros(n_slots(d))

    def idx(k, name):
        if k is None or not 1 <= int(k) <= d:
            raise InvalidParams(f"index {name}={k} out of range 1..{d}")
        return int(k)

    if kind == "first":
        u[idx(i, "i") - 1] = 1.0
    elif kind == "time":
        u[d] = 1.0
    elif kind == "rotation":
        a, b = idx(i, "i"), idx(j, "j")
        if a >= b:
            raise InvalidParams(f"rotation needs i < j, got ({a}, {b})")
        u[rotation_slot(d, a, b)] = 1.0
    elif kind == "boostdrift":
        u[n_slots(d) - d + idx(i, "i") - 1] = 1.0
    else:
        raise InvalidParams(f"unknown basis kind {kind!r}")
    return AlgebraElement(u, d)


def rotation_slot(d: int, i: int, j: int) -> int:
    """Slot of u_ij (1-based i < j) in the canonical order."""
    k = d + 1
    for a in range(1, d + 1):
        for b in range(a + 1, d + 1):
            if (a, b) == (i, j):
                return k
            k += 1
    raise InvalidParams(f"no rotation slot for ({i}, {j})")


def bracket(A: AlgebraElement, B: AlgebraElement) -> AlgebraElement:
    _same_dim(A, B)
    a, b = A.matrix(), B.matrix()
    return AlgebraElement.from_matrix(a @ b - b @ a)


def exp_algebra(A: AlgebraElement) -> GroupElement:
    E = K.expm_batch(A.matrix()[None])[0]
    return GroupElement.from_matrix(E)


def group_mul(a: GroupElement, b: GroupElement) -> GroupElement:
    if a.d != b.d:
        raise InvalidParams(f"dimension mismatch: {a.d} vs {b.d}")
    return GroupElement(a.lorentz @ b.lorentz, a.translation + a.lorentz @ b.translation)


def group_inv(a: GroupElement) -> GroupElement:
    # g^{-1} = eta g^T eta for a Lorentz matrix
    e = eta(a.d)
    gi = e @ a.lorentz.T @ e
    return GroupElement(gi, -gi @ a.translation)


def log_group(a: GroupElement) -> AlgebraElement:
    L, ok = K.logm_batch(a.matrix()[None])
    if not ok[0]:
        raise NonConvergent("matrix logarithm did not converge")
    return AlgebraElement.from_matrix(L[0], tol=1e-8)
