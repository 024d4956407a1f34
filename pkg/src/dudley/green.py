"""Occupation-time Green estimates, cones, slice capacities and Wiener sums.

All estimates are computed in rescaled exp-chart coordinates. For a scale
eps the diffusion is run with increments T_eps(a_k) on a rescaled time grid,
and coordinates are read back through T_{1/eps}. A box B around a rescaled
probe corresponds to the real box T_eps(B), so

    G(x, T_eps y) * eps^(Q-2) = (rescaled time in B) / vol(B),

which is the quantity compared with the tangent Green function. The chart
Jacobian at the base point is 1, so no Jacobian factor appears.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import cKDTree

from . import _kernels as K
from .diffusion import batch_history, first_exit, time_upper_bound
from .driver import DEFAULT_SUBSTEPS, iter_chunks
from .errors import ChartOverflow, InsufficientCloud, InvalidParams, SingularPair
from .graded import ConeSpec, GradedIndex, angular, bch_limit, dilate, graded_dimension, hnorm
from .lorentz import AlgebraElement, GroupElement, check_dim
from .tangent import (DEFAULT_WIDTHS, OccupationAccumulator, batch_tangent, box_volume,
                      probe_widths, untied_step)


def _coords(points) -> np.ndarray:
    return np.atleast_2d(np.array([p.coords if isinstance(p, AlgebraElement) else p
                                   for p in np.atleast_2d(points)], dtype=float))


def _start_mats(d: int, eps_list, start_coords=None) -> np.ndarray:
    """exp(T_eps c) for each eps, identity when no start is given."""
    eps_list = list(eps_list)
    if start_coords is None:
        return np.broadcast_to(np.eye(d + 2), (len(eps_list), d + 2, d + 2)).copy()
    A = np.empty((len(eps_list), d + 2, d + 2))
    for e, eps in enumerate(eps_list):
        K.coords_to_matrix(dilate(eps, np.asarray(start_coords, dtype=float), d), d, A[e])
    return K.expm_batch(A)


@dataclass
class OccupationHistogram:
    """Accumulated occupation of a family of boxes, mergeable across runs."""

    centers: np.ndarray
    half_widths: np.ndarray
    total: np.ndarray
    total_sq: np.ndarray
    hits: np.ndarray
    N: int
    R: float
    eps: float = 1.0
    h: float = 0.0
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_accumulator(cls, acc: OccupationAccumulator, R: float, eps: float = 1.0,
                         h: float = 0.0, **meta) -> "OccupationHistogram":
        return cls(acc.centers.copy(), acc.hw.copy(), acc.total.copy(), acc.total_sq.copy(),
                   acc.hits.copy(), acc.N, R, eps, h, dict(meta))

    def merge(self, other: "OccupationHistogram") -> "OccupationHistogram":
        if (self.centers.shape != other.centers.shape or not np.array_equal(self.centers, other.centers)
                or not np.array_equal(self.half_widths, other.half_widths)):
            raise InvalidParams("cannot merge histograms over different boxes")
        return OccupationHistogram(self.centers, self.half_widths, self.total + other.total,
                                   self.total_sq + other.total_sq, self.hits + other.hits,
                                   self.N + other.N, self.R, self.eps, self.h, dict(self.meta))

    def mean_time(self) -> tuple[np.ndarray, np.ndarray]:
        N = max(self.N, 1)
        mean = self.total / N
        var = np.maximum(self.total_sq / N - mean ** 2, 0.0) * N / max(N - 1, 1)
        return mean, np.sqrt(var / N)

    def density(self) -> tuple[np.ndarray, np.ndarray]:
        """Occupation density per box (time / volume) with standard errors."""
        vol = np.prod(2.0 * self.half_widths, axis=1)
        m, se = self.mean_time()
        return m / vol, se / vol


def _horizon(centers, hw, eps_list, d, start_mats, h) -> float:
    """Rescaled-time horizon after which no path can occupy the boxes."""
    best = 0.0
    for e, eps in enumerate(eps_list):
        t_real = eps ** 2 * time_upper_bound(centers, hw, d, eps)
        t_real -= start_mats[e][0, d + 1]
        best = max(best, t_real / eps ** 2)
    # the midpoint step can shave a tiny amount off the unit-speed bound
    return max(h, 1.02 * best + 2 * h)


def rescaled_occupation(centers, hw, eps_list: Sequence[float], R: float, N: int, seed: int,
                        d: int = 2, h: float = 1e-2, s: int = DEFAULT_SUBSTEPS,
                        sigma: float = 1.0, scheme: str = "exponential-midpoint",
                        start_coords=None, with_tangent: bool = False, stream: int = 0,
                        horizon: float | None = None, per_path: bool = False) -> dict:
    """Occupation of boxes by the rescaled diffusions, one histogram per eps.

    All scales (and the tangent process when requested) share the drivers.
    Paths are killed on leaving the homogeneous ball of radius R (radius
    R/eps in rescaled coordinates). With ``per_path`` the per-path times are
    returned as well, for paired statistics.
    """
    d = check_dim(d)
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    hw = np.broadcast_to(np.asarray(hw, dtype=float), centers.shape).copy()
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 or e > 1 for e in eps_list):
        raise InvalidParams(f"eps values must lie in (0, 1], got {eps_list}")
    starts = _start_mats(d, eps_list, start_coords)
    T = horizon if horizon is not None else _horizon(centers, hw, eps_list, d, starts, h)
    midpoint = scheme == "exponential-midpoint"
    accs = [OccupationAccumulator(centers, hw) for _ in eps_list]
    tacc = OccupationAccumulator(centers, hw) if with_tangent else None
    paths = {e: [] for e in range(len(eps_list))}
    paths["tangent"] = []
    drops = 0
    exact = 0
    for b in iter_chunks(seed, T, h, d, N, s, stream):
        times, _, overflow, dr, ex = K.box_occupation(
            b.dB, b.area, b.sdb, b.bds, b.h, float(sigma), np.asarray(eps_list), midpoint,
            starts, d, centers, hw, float(R))
        if overflow.any():
            raise ChartOverflow(f"{int(overflow.sum())} paths left the chart inside radius {R}")
        drops += int(dr.sum())
        exact += int(ex)
        for e in range(len(eps_list)):
            accs[e].add_times(times[:, e])
            if per_path:
                paths[e].append(times[:, e])
        if tacc is not None:
            t = tacc.add(batch_tangent(b, sigma), h)
            if per_path:
                paths["tangent"].append(t)
    out = {"hist": [OccupationHistogram.from_accumulator(a, R, eps, h) for a, eps in zip(accs, eps_list)],
           "horizon": T, "xi0_drops": drops, "exact_logs": exact, "h": h}
    if tacc is not None:
        out["tangent"] = OccupationHistogram.from_accumulator(tacc, math.inf, 0.0, h)
    if per_path:
        out["paths"] = {k: np.concatenate(v) if v else None for k, v in paths.items()}
    return out


@dataclass(frozen=True)
class GreenRow:
    probe: np.ndarray
    G: float
    stderr: float
    upper: float
    hits: int
    N: int
    half_widths: np.ndarray
    inside: bool


def green_estimate(x: GroupElement | None, probes, R: float, N: int, h: float, seed: int,
                   d: int = 2, widths=DEFAULT_WIDTHS, s: int = DEFAULT_SUBSTEPS,
                   sigma: float = 1.0, scheme: str = "exponential-euler",
                   scale_to_norm: bool = True, stream: int = 0) -> list[GreenRow]:
    """Occupation density of the diffusion from x killed outside the ball of radius R.

    Probes are exp-chart coordinates at x. By left invariance the estimate
    does not depend on x itself. Probes outside the ball get 0.
    """
    if x is not None and x.d != d:
        raise InvalidParams(f"start has d={x.d}, expected {d}")
    P = _coords(probes)
    r = np.atleast_1d(hnorm(P, d))
    if np.any(r == 0):
        raise InvalidParams("probes must be nonzero")
    hw = probe_widths(P, d, widths, scale_to_norm)
    inside = r < R
    G = np.zeros(len(P))
    se = np.zeros(len(P))
    hits = np.zeros(len(P), dtype=np.int64)
    if inside.any():
        res = rescaled_occupation(P[inside], hw[inside], [1.0], R, N, seed, d, h, s, sigma,
                                  scheme, stream=stream)
        hist = res["hist"][0]
        g, e = hist.density()
        G[inside], se[inside], hits[inside] = g, e, hist.hits
    rows = []
    for k in range(len(P)):
        vol = box_volume(hw[k])
        upper = G[k] if hits[k] else (3.0 / N * 2 * hw[k, d] / vol if inside[k] else 0.0)
        rows.append(GreenRow(P[k].copy(), float(G[k]), float(se[k]), float(upper),
                             int(hits[k]), N, hw[k].copy(), bool(inside[k])))
    return rows


def theorem1_check(theta, ladder: Sequence[float], N: int, seed: int, d: int = 2,
                   R: float = 1.0, h: float = 1e-2, widths=DEFAULT_WIDTHS,
                   s: int = DEFAULT_SUBSTEPS, sigma: float = 1.0,
                   scheme: str = "exponential-midpoint", replications: int = 1) -> dict:
    """S(eps) = eps^(Q-2) G(x, T_eps theta) against the tangent estimate at theta.

    Every replication uses an independent driver stream; within a
    replication all rungs and the tangent estimate share drivers.
    """
    th = _coords(theta)[0]
    r = float(hnorm(th, d))
    if abs(r - 1.0) > 1e-9:
        raise InvalidParams(f"angular probe must have unit norm, got {r}")
    ladder = [float(e) for e in ladder]
    hw = probe_widths(th[None], d, widths, scale_to_norm=False)
    h = untied_step(h, [th[d] - hw[0, d], th[d] + hw[0, d]])
    reps = []
    for rep in range(replications):
        res = rescaled_occupation(th[None], hw, ladder, R, N, seed, d, h, s, sigma, scheme,
                                  with_tangent=True, stream=rep, per_path=True)
        vol = box_volume(hw[0])
        phi_t = res["paths"]["tangent"][:, 0] / vol
        phi, phi_se = float(phi_t.mean()), float(phi_t.std(ddof=1) / math.sqrt(N))
        rungs = []
        for e, eps in enumerate(ladder):
            st = res["paths"][e][:, 0] / vol
            S, S_se = float(st.mean()), float(st.std(ddof=1) / math.sqrt(N))
            diff = st - phi_t
            rungs.append({"eps": eps, "S": S, "stderr": S_se, "abs_diff": abs(S - phi),
                          "combined_se": math.hypot(S_se, phi_se),
                          "paired_se": float(diff.std(ddof=1) / math.sqrt(N))})
        improves = [rungs[k + 1]["abs_diff"] < rungs[k]["abs_diff"] for k in range(len(rungs) - 1)]
        reps.append({"stream": rep, "phi": phi, "phi_stderr": phi_se, "rungs": rungs,
                     "improves": improves, "horizon": res["horizon"], "xi0_drops": res["xi0_drops"]})
    last = reps[0]["rungs"][-1]
    frac = float(np.mean([all(r["improves"]) for r in reps])) if len(ladder) > 1 else math.nan
    return {"theta": th.tolist(), "ladder": ladder, "N": N, "h": h, "R": R, "scheme": scheme,
            "half_widths": hw[0].tolist(), "replications": reps,
            "final_within_3se": bool(last["abs_diff"] <= 3 * last["combined_se"]),
            "improvement_fraction": frac}


# -- cones -------------------------------------------------------------------

def cone_hit(cone: ConeSpec, t_grid: Sequence[float], N: int, h_ladder: Sequence[float],
             seed: int, s: int = 1, sigma: float = 1.0, scheme: str = "exponential-euler",
             stream: int = 0) -> list[dict]:
    """Empirical P(T_cone <= t) for paths started at the cone vertex.

    By left invariance the exp-chart coordinates relative to the vertex are
    those of the path started at the identity.
    """
    d = cone.d
    t_grid = np.sort(np.asarray(t_grid, dtype=float))
    T = float(t_grid[-1])
    rows = []
    for h in h_ladder:
        hit_t = []
        for b in iter_chunks(seed, T, h, d, N, s, stream):
            coords, fail, _ = batch_history(b, [1.0], sigma, d, scheme == "exponential-midpoint")
            c = coords[:, 0]
            inside = cone.contains_coords(c)
            n_steps = c.shape[1]
            k = np.where(inside.any(axis=1), inside.argmax(axis=1), n_steps)
            f = fail[:, 0]
            if np.any((f >= 0) & (f - 1 < k)):
                raise ChartOverflow("paths left the chart before hitting the cone")
            hit_t.append(np.where(k < n_steps, (k + 1) * h, np.inf))
        ht = np.concatenate(hit_t)
        for t in t_grid:
            p = float(np.mean(ht <= t + 1e-12 * h))
            rows.append({"h": float(h), "t": float(t), "p_hat": p,
                         "stderr": math.sqrt(p * (1 - p) / N), "N": N})
    return rows


# -- slices and capacities ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SliceSpec:
    """Slices B_n = {p in cone : lam^(n+1) <= |p| < lam^n} for n0 <= n <= n1."""

    cone: ConeSpec
    lam: float
    n0: int
    n1: int

    def __post_init__(self):
        if not 0 < self.lam < 1:
            raise InvalidParams(f"lambda must lie in (0, 1), got {self.lam}")
        if self.n1 < self.n0:
            raise InvalidParams("empty slice range")

    @property
    def ns(self) -> list[int]:
        return list(range(self.n0, self.n1 + 1))

    def scale(self, n: int) -> float:
        return self.lam ** n

    def index_of(self, coords: np.ndarray) -> np.ndarray:
        """Slice index n of each point (-1 outside the cone or the range)."""
        r = np.asarray(hnorm(coords, self.cone.d))
        inc = self.cone.contains_coords(coords)
        with np.errstate(divide="ignore"):
            n = np.floor(np.log(np.where(r > 0, r, np.nan)) / np.log(self.lam))
        ok = inc & np.isfinite(n) & (n >= self.n0) & (n <= self.n1)
        return np.where(ok, n, -1).astype(int)


@dataclass(frozen=True, eq=False)
class CellCloud:
    """Grid cells (in rescaled coordinates) whose centers lie in a region."""

    lo: np.ndarray
    width: np.ndarray
    shape: tuple
    cell_of_flat: np.ndarray  # flat grid index -> cloud index or -1
    centers: np.ndarray
    d: int

    @property
    def size(self) -> int:
        return len(self.centers)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.width))

    @property
    def volume(self) -> float:
        return self.size * self.cell_volume

    def cell_index(self, pts: np.ndarray) -> np.ndarray:
        x = np.floor((pts - self.lo) / self.width)
        finite = np.all(np.isfinite(x), axis=-1)
        q = np.where(finite[..., None], x, -1).astype(np.int64)
        shape = np.array(self.shape)
        ok = np.all((q >= 0) & (q < shape), axis=-1) & finite
        q = np.where(ok[..., None], q, 0)
        flat = np.ravel_multi_index(np.moveaxis(q, -1, 0), self.shape)
        return np.where(ok, self.cell_of_flat[flat], -1)

    def subset(self, keep: np.ndarray) -> "CellCloud":
        keep = np.asarray(keep, dtype=bool)
        new_id = np.full(self.size, -1)
        new_id[keep] = np.arange(int(keep.sum()))
        m = self.cell_of_flat >= 0
        cof = self.cell_of_flat.copy()
        cof[m] = new_id[self.cell_of_flat[m]]
        return CellCloud(self.lo, self.width, self.shape, cof, self.centers[keep], self.d)


def slice_cloud(cone: ConeSpec, lam: float, cells: int | Sequence[int] = 5) -> CellCloud:
    """Cells of a grid over [-1, 1]^n whose centers lie in the unit slice
    {lam <= |u| < 1} of the cone (rescaled coordinates)."""
    d = cone.d
    n = GradedIndex(d).n
    g = np.broadcast_to(np.asarray(cells, dtype=int), (n,)).copy()
    lo = -np.ones(n)
    width = 2.0 / g
    axes = [lo[k] + (np.arange(g[k]) + 0.5) * width[k] for k in range(n)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    r = hnorm(grid, d)
    keep = (r >= lam) & (r < 1.0) & cone.contains_coords(grid)
    cof = np.full(len(grid), -1)
    cof[keep] = np.arange(int(keep.sum()))
    return CellCloud(lo, width, tuple(int(x) for x in g), cof, grid[keep], d)


def _source_subset(size: int, max_sources: int | None) -> np.ndarray:
    if max_sources is None or max_sources >= size:
        return np.arange(size)
    return np.unique(np.linspace(0, size - 1, max_sources).round().astype(int))


def cell_green_matrix(cloud: CellCloud, eps: float, R: float, N: int, seed: int,
                      sources: np.ndarray | None = None, h: float = 1e-2,
                      s: int = DEFAULT_SUBSTEPS, sigma: float = 1.0,
                      scheme: str = "exponential-midpoint", stream: int = 0):
    """Mean rescaled time spent in each cell for paths from each source center.

    Returns (M, M_se) with shape (n_sources, n_cells). Every source uses the
    same driver stream, so differences between sources are coupled.
    """
    d = cloud.d
    sources = np.arange(cloud.size) if sources is None else np.asarray(sources)
    M = np.zeros((len(sources), cloud.size))
    M2 = np.zeros_like(M)
    U = np.zeros(len(sources))
    U2 = np.zeros(len(sources))
    hw_all = np.broadcast_to(cloud.width / 2, cloud.centers.shape)
    for i, src in enumerate(sources):
        starts = _start_mats(d, [eps], cloud.centers[src])
        T = _horizon(cloud.centers, hw_all, [eps], d, starts, h)
        for b in iter_chunks(seed, T, h, d, N, s, stream):
            coords, fail, _ = batch_history(b, [eps], sigma, d,
                                            scheme == "exponential-midpoint", starts)
            c = coords[:, 0]
            k, overflow = first_exit(c, R / eps, d)
            if overflow.any():
                raise ChartOverflow(f"paths left the chart inside radius {R} (eps={eps})")
            alive = np.arange(c.shape[1])[None, :] < k[:, None]
            cid = np.where(alive, cloud.cell_index(c), -1)
            C = c.shape[0]
            rows = np.repeat(np.arange(C), c.shape[1])
            flat = cid.reshape(-1)
            ok = flat >= 0
            per = np.zeros((C, cloud.size))
            np.add.at(per, (rows[ok], flat[ok]), h)
            M[i] += per.sum(axis=0)
            M2[i] += (per ** 2).sum(axis=0)
            tot = per.sum(axis=1)
            U[i] += tot.sum()
            U2[i] += (tot ** 2).sum()
    mean = M / N
    se = np.sqrt(np.maximum(M2 / N - mean ** 2, 0) / max(N - 1, 1))
    umean = U / N
    use = np.sqrt(np.maximum(U2 / N - umean ** 2, 0) / max(N - 1, 1))
    return mean, se, umean, use


def uniform_capacity(cloud: CellCloud, union_time: np.ndarray, union_se: np.ndarray):
    """Variational lower bound with the uniform measure on the cloud.

    The potential of mass m spread uniformly is m/vol * E_x[time in cloud];
    capping its maximum over sources at 1 gives m = vol / max_x E_x[time].
    """
    if cloud.size == 0:
        return 0.0, 0.0
    j = int(np.argmax(union_time))
    T = float(union_time[j])
    if T <= 0:
        raise InsufficientCloud("no source path spent time in the cloud")
    cap = cloud.volume / T
    return cap, cap * float(union_se[j]) / T


def lp_capacity(G: np.ndarray, cell_volume: float, support: np.ndarray | None = None) -> float:
    """max sum(m) subject to G m / cell_volume <= 1 on all sources, m >= 0.

    ``support`` restricts which cells may carry mass. Restricting the support
    can only lower the optimum, so the estimate is monotone in the set.
    """
    A = np.asarray(G, dtype=float) / cell_volume
    n_cells = A.shape[1]
    support = np.ones(n_cells, dtype=bool) if support is None else np.asarray(support, dtype=bool)
    if not support.any():
        return 0.0
    cols = np.flatnonzero(support)
    sub = A[:, cols]
    if np.any(sub.max(axis=0) <= 0):
        raise InsufficientCloud("some cells are never visited; the program is unbounded")
    res = linprog(-np.ones(len(cols)), A_ub=sub, b_ub=np.ones(A.shape[0]),
                  bounds=[(0, None)] * len(cols), method="highs")
    if res.status != 0:
        raise InsufficientCloud(f"capacity program failed: {res.message}")
    return float(-res.fun)


def slice_capacity(slices: SliceSpec, N: int, seed: int, R: float = 1.0, h: float = 1e-2,
                   cells: int = 5, max_sources: int | None = 16, s: int = DEFAULT_SUBSTEPS,
                   sigma: float = 1.0, scheme: str = "exponential-midpoint") -> list[dict]:
    """Uniform-measure capacity estimate of each slice B_n.

    The cloud for B_n is the dilation by lam^n of one rescaled cloud, and
    every slice reuses the same drivers.
    """
    d = slices.cone.d
    Q = graded_dimension(d)
    cloud = slice_cloud(slices.cone, slices.lam, cells)
    if cloud.size == 0:
        return [{"n": n, "capacity": 0.0, "stderr": 0.0, "cloud": 0, "sources": 0}
                for n in slices.ns]
    src = _source_subset(cloud.size, max_sources)
    rows = []
    for n in slices.ns:
        eps = slices.scale(n)
        _, _, ut, use = cell_green_matrix(cloud, eps, R, N, seed, src, h, s, sigma, scheme)
        cap, se = uniform_capacity(cloud, ut, use)
        f = eps ** (Q - 2)
        rows.append({"n": n, "eps": eps, "capacity": cap * f, "stderr": se * f,
                     "rescaled_capacity": cap, "cloud": cloud.size, "sources": len(src)})
    return rows


# -- q functional --------------------------------------------------------------

class PhiTable:
    """Nearest-neighbour lookup of tangent Green values on the unit sphere."""

    def __init__(self, probes: np.ndarray, values: np.ndarray):
        self.probes = np.atleast_2d(np.asarray(probes, dtype=float))
        self.values = np.asarray(values, dtype=float)
        self._tree = cKDTree(self.probes)

    def __call__(self, beta: np.ndarray) -> np.ndarray:
        _, idx = self._tree.query(np.atleast_2d(beta))
        return self.values[idx]


def q_functional(H, boundary, phi: Callable[[np.ndarray], np.ndarray], m, d: int = 2) -> float:
    """m(H) / max over boundary u of sum_{v != u} phi(beta(u, v)) alpha(u, v)^(2-Q) m(v).

    Returns +inf when every boundary potential vanishes.
    """
    H = _coords(H)
    M = len(H)
    m = np.broadcast_to(np.asarray(m, dtype=float), (M,))
    boundary = np.asarray(boundary, dtype=bool)
    Q = graded_dimension(d)
    U = np.repeat(H, M, axis=0)
    V = np.tile(H, (M, 1))
    off = ~np.eye(M, dtype=bool).reshape(-1)
    w = bch_limit(U[off], V[off], d)
    alpha = np.asarray(hnorm(w, d))
    if np.any(alpha == 0):
        raise SingularPair("two distinct cloud points coincide in the limit")
    beta = angular(w, d)
    vals = np.asarray(phi(beta), dtype=float) * alpha ** (2 - Q)
    pot = np.zeros(M * M)
    pot[off] = vals * np.tile(m, M)[off]
    pot = pot.reshape(M, M).sum(axis=1)
    denom = pot[boundary].max() if boundary.any() else 0.0
    if denom <= 0:
        return math.inf
    return float(m.sum() / denom)


# -- Wiener sum ------------------------------------------------------------------

def wiener_sum(ns: Sequence[int], capacities: Sequence[float], lam: float, Q: int,
               weight: str = "classical", slope_threshold: float = 0.5) -> dict:
    """Partial sums of the Wiener series and a growth verdict.

    ``classical`` weighs slice n by lam^(-n(Q-2)); ``inverse`` by lam^(n(Q-2)).
    The verdict fits the log-log slope of partial sums against the number of
    terms over the second half of the range: a slope above the threshold is
    read as divergence.
    """
    ns = np.asarray(ns, dtype=float)
    caps = np.asarray(capacities, dtype=float)
    if ns.shape != caps.shape:
        raise InvalidParams("slice indices and capacities differ in length")
    sign = {"classical": -1.0, "inverse": 1.0}.get(weight)
    if sign is None:
        raise InvalidParams(f"unknown weight {weight!r}")
    terms = lam ** (sign * ns * (Q - 2)) * caps
    partial = np.cumsum(terms)
    slope = 0.0
    if partial[-1] > 0:
        k = np.arange(1, len(ns) + 1, dtype=float)
        first = int(np.argmax(partial > 0))
        idx = np.arange(max(first, len(ns) // 2), len(ns))
        if len(idx) >= 2:
            slope = float(np.polyfit(np.log(k[idx]), np.log(partial[idx]), 1)[0])
    verdict = "diverges" if slope > slope_threshold else "converges"
    return {"weight": weight, "ns": ns.astype(int).tolist(), "terms": terms.tolist(),
            "partial_sums": partial.tolist(), "slope": slope, "verdict": verdict}
