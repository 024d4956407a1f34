"""Graded structure: layers, dilations, homogeneous norm, cones.

Most functions accept either an :class:`AlgebraElement` or a plain array of
graded coordinates with shape ``(..., n)``; array inputs need ``d``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DegeneratePair, InvalidParams, ZeroElement
from .lorentz import (AlgebraElement, GroupElement, check_dim, group_inv, group_mul,
                      log_group, n_slots)


def graded_dimension(d: int) -> int:
    d = int(d)
    if d < 2:
        raise InvalidParams(f"graded dimension needs d >= 2, got {d}")
    return d * d + 3 * d + 2


@dataclass(frozen=True)
class GradedIndex:
    """Slot names and layer orders in the canonical order."""

    d: int
    names: tuple[str, ...] = field(init=False)
    orders: tuple[int, ...] = field(init=False)

    def __post_init__(self):
        d = check_dim(self.d)
        names = [f"u{i}" for i in range(1, d + 1)] + ["u0"]
        names += [f"u{i}{j}" for i in range(1, d + 1) for j in range(i + 1, d + 1)]
        names += [f"u{i}0" for i in range(1, d + 1)]
        orders = [1] * d + [2] * (1 + d * (d - 1) // 2) + [3] * d
        object.__setattr__(self, "names", tuple(names))
        object.__setattr__(self, "orders", tuple(orders))

    @property
    def n(self) -> int:
        return len(self.names)

    @property
    def layer_sizes(self) -> tuple[int, int, int]:
        d = self.d
        return d, 1 + d * (d - 1) // 2, d

    def layer(self, k: int) -> slice:
        a, b, _ = self.layer_sizes
        return {1: slice(0, a), 2: slice(a, a + b), 3: slice(a + b, self.n)}[k]

    @property
    def time_slot(self) -> int:
        return self.d

    def weights(self) -> np.ndarray:
        return np.array(self.orders, dtype=float)


def slot_names(d: int) -> list[str]:
    return list(GradedIndex(d).names)


def _as_array(A, d):
    if isinstance(A, AlgebraElement):
        return A.coords, A.d, True
    a = np.asarray(A, dtype=float)
    if d is None:
        from .lorentz import dim_from_slots
        d = dim_from_slots(a.shape[-1])
    return a, check_dim(d), False


def dilate(eps: float, A, d: int | None = None):
    if not eps > 0:
        raise InvalidParams(f"dilation factor must be positive, got {eps}")
    a, d, wrap = _as_array(A, d)
    out = a * eps ** GradedIndex(d).weights()
    return AlgebraElement(out, d) if wrap else out


def layer_gauges(a: np.ndarray, d: int):
    """Homogeneous gauges (|u_1|, |u_2|^(1/2), |u_3|^(1/3)) of each layer."""
    g = GradedIndex(d)
    s1 = np.sqrt(np.sum(a[..., g.layer(1)] ** 2, axis=-1))
    s2 = np.sum(a[..., g.layer(2)] ** 2, axis=-1) ** 0.25
    s3 = np.sum(a[..., g.layer(3)] ** 2, axis=-1) ** (1.0 / 6.0)
    return s1, s2, s3


def hnorm(A, d: int | None = None):
    """((sum u_i^2)^(Q/2) + (u_0^2 + sum u_ij^2)^(Q/4) + (sum u_i0^2)^(Q/6))^(1/Q)."""
    a, d, wrap = _as_array(A, d)
    Q = graded_dimension(d)
    s1, s2, s3 = layer_gauges(a, d)
    m = np.maximum(np.maximum(s1, s2), s3)
    safe = np.where(m > 0, m, 1.0)
    r = m * ((s1 / safe) ** Q + (s2 / safe) ** Q + (s3 / safe) ** Q) ** (1.0 / Q)
    r = np.where(m > 0, r, 0.0)
    return float(r) if (wrap or np.ndim(r) == 0) else r


def angular(A, d: int | None = None):
    a, d, wrap = _as_array(A, d)
    r = hnorm(a, d)
    if np.any(np.asarray(r) == 0):
        raise ZeroElement("angular part of the zero element is undefined")
    out = a * np.power(np.asarray(r, dtype=float)[..., None], -GradedIndex(d).weights())
    return AlgebraElement(out, d) if wrap else out


def relative_coords(base: GroupElement, target: GroupElement) -> AlgebraElement:
    """log(base^-1 target); hnorm of the result is |target| seen from base."""
    return log_group(group_mul(group_inv(base), target))


def bch_limit(u, v, d: int | None = None):
    """Limit of T_{1/eps} log(exp(-T_eps u) exp(T_eps v)) as eps -> 0."""
    ua, d, wrap = _as_array(u, d)
    va, _, _ = _as_array(v, d)
    g = GradedIndex(d)
    w = va - ua
    ui, vi = ua[..., :d], va[..., :d]
    k = g.layer(2).start + 1
    for i in range(d):
        for j in range(i + 1, d):
            w[..., k] += 0.5 * (vi[..., i] * ui[..., j] - ui[..., i] * vi[..., j])
            k += 1
    u0, v0 = ua[..., d], va[..., d]
    s3 = g.layer(3).start
    for i in range(d):
        w[..., s3 + i] -= 0.5 * (ui[..., i] * v0 - u0 * vi[..., i])
    return AlgebraElement(w, d) if wrap else w


def bch_alpha_beta(u, v, d: int | None = None):
    """(alpha, beta) = (hnorm, angular part) of :func:`bch_limit`."""
    w = bch_limit(u, v, d)
    wa, dd, wrap = _as_array(w, d)
    alpha = hnorm(wa, dd)
    if np.any(np.asarray(alpha) == 0):
        raise DegeneratePair("the pair coincides in the limit")
    beta = angular(wa, dd)
    if wrap:
        return float(alpha), AlgebraElement(beta, dd)
    return alpha, beta


SolePredicate = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True, eq=False)
class ConeSpec:
    """Homogeneous cone based at ``vertex``.

    ``sole`` acts on arrays of unit-norm graded coordinates ``(..., n)`` and
    returns a boolean array. Membership is decided on the angular part, so
    the cone is dilation invariant by construction; the vertex is excluded.
    """

    vertex: GroupElement
    sole: SolePredicate
    sole_in_future: bool
    name: str = "cone"

    @property
    def d(self) -> int:
        return self.vertex.d

    def contains_coords(self, U: np.ndarray) -> np.ndarray:
        U = np.asarray(U, dtype=float)
        r = hnorm(U, self.d)
        inside = np.zeros(np.shape(r), dtype=bool)
        nz = np.asarray(r) > 0
        if np.any(nz):
            th = angular(U[nz], self.d)
            inside[nz] = np.asarray(self.sole(th), dtype=bool)
        return inside


def axial_cone(d: int, c: float, vertex: GroupElement | None = None,
               past: bool = False) -> ConeSpec:
    """Cone whose sole is {theta_0 >= c} (or {theta_0 <= -c} when ``past``)."""
    d = check_dim(d)
    vertex = vertex or GroupElement.identity(d)
    if past:
        sole = lambda th: th[..., d] <= -c
        return ConeSpec(vertex, sole, False, f"past(u0<=-{c:g})")
    if not c > 0:
        raise InvalidParams("a future cone needs c > 0 so the sole avoids u0 = 0")
    sole = lambda th: th[..., d] >= c
    return ConeSpec(vertex, sole, True, f"future(u0>={c:g})")


def cone_contains(c: ConeSpec, p: GroupElement) -> bool:
    w = relative_coords(c.vertex, p)
    return bool(c.contains_coords(w.coords[None])[0])


# -- numeric checks ----------------------------------------------------------

def _exp_coords(U: np.ndarray, d: int) -> np.ndarray:
    from . import _kernels as K
    D = d + 2
    A = np.empty((len(U), D, D))
    for k in range(len(U)):
        K.coords_to_matrix(U[k], d, A[k])
    return K.expm_batch(A)


def _log_coords(M: np.ndarray, d: int) -> np.ndarray:
    from . import _kernels as K
    from .errors import NonConvergent
    L, ok = K.logm_batch(np.ascontiguousarray(M))
    if not np.all(ok):
        raise NonConvergent(f"{int((~ok).sum())} logarithms did not converge")
    out = np.empty((len(M), n_slots(d)))
    for k in range(len(M)):
        K.matrix_to_coords(L[k], d, out[k])
    return out


def bch_rescaled(u, v, eps: float, d: int) -> np.ndarray:
    """T_{1/eps} log(exp(-T_eps u) exp(T_eps v)) by matrix exp/log, batched over rows."""
    U = np.atleast_2d(np.asarray(u, dtype=float))
    V = np.atleast_2d(np.asarray(v, dtype=float))
    Eu = _exp_coords(dilate(eps, -U, d), d)
    Ev = _exp_coords(dilate(eps, V, d), d)
    return dilate(1.0 / eps, _log_coords(Eu @ Ev, d), d)


def alpha_numeric(u, v, d: int, ladder=(0.1, 0.05, 0.025)) -> dict:
    """hnorm of the rescaled relative coordinates along an eps ladder, plus
    a Richardson step on the last two rungs.

    The error is even in eps (the next BCH terms have one extra order), so
    the step is (r^2 a(eps') - a(eps)) / (r^2 - 1) with r = eps / eps'.
    """
    ladder = [float(e) for e in ladder]
    vals = np.array([np.atleast_1d(hnorm(bch_rescaled(u, v, e, d), d)) for e in ladder])
    out = {"ladder": ladder, "alpha": vals}
    if len(ladder) >= 2:
        r2 = (ladder[-2] / ladder[-1]) ** 2
        out["extrapolated"] = (r2 * vals[-1] - vals[-2]) / (r2 - 1)
    return out


def random_elements(rng: np.random.Generator, N: int, d: int, radius: float = 1.0,
                    uniform_radius: bool = True) -> np.ndarray:
    """Random graded coordinates with hnorm in (0, radius]."""
    U = rng.standard_normal((N, n_slots(d)))
    U = angular(U, d)
    r = radius * (rng.uniform(size=N) if uniform_radius else np.ones(N))
    r = np.maximum(r, 1e-3 * radius)
    return U * r[:, None] ** GradedIndex(d).weights()


def quasi_triangle_constant(N: int, seed: int, d: int = 2, radius: float = 0.1) -> float:
    """Empirical max of |y|_w / (|z|_w + |z|_y) over random triples.

    z = w exp(a) and y = z exp(b) with hnorm(a), hnorm(b) <= radius; by left
    invariance w can be the identity, so |y|_w = |log(exp(a) exp(b))|.
    """
    rng = np.random.default_rng(seed)
    a = random_elements(rng, N, d, radius)
    b = random_elements(rng, N, d, radius)
    Ea = _exp_coords(a, d)
    Eb = _exp_coords(b, d)
    y = _log_coords(Ea @ Eb, d)
    zw = hnorm(a, d)
    zy = hnorm(-b, d)
    return float(np.max(hnorm(y, d) / (zw + zy)))
