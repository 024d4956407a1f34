"""The algebra-valued tangent process and the experiments built on it.

Coordinates at time t:
    u_i = B^i_t,  u_0 = t,
    u_ij = 1/2 (int B^i o dB^j - int B^j o dB^i),
    u_i0 = 1/2 (int_0^t B^i ds - int_0^t s o dB^i).
Step records are composed with the graded group law, which is exact for
the piecewise-linear driver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .diffusion import batch_history
from .driver import DriverBatch, DriverPath, iter_chunks, pair_index
from .errors import InvalidParams
from .graded import GradedIndex, dilate, hnorm
from .lorentz import AlgebraElement, check_dim

DEFAULT_WIDTHS = (0.2, 0.1, 0.05)


@dataclass(frozen=True)
class TangentState:
    t: float
    u: AlgebraElement


def tangent_history(dB, area, sdb, bds, h: float, sigma: float = 1.0) -> np.ndarray:
    """Tangent coordinates at t_k = (k+1)h for arrays shaped (..., n_steps, m)."""
    dB = np.asarray(dB, dtype=float)
    m = dB.shape[-1]
    n_steps = dB.shape[-2]
    pairs = pair_index(m)
    a1 = sigma * dB
    U1 = np.cumsum(a1, axis=-2)
    prev = U1 - a1
    t_prev = (np.arange(n_steps) * h)[:, None]
    out = np.empty(dB.shape[:-1] + (2 * m + 1 + len(pairs),))
    out[..., :m] = U1
    out[..., m] = np.arange(1, n_steps + 1) * h
    for c, (i, j) in enumerate(pairs):
        inc = sigma ** 2 * area[..., c] + 0.5 * (prev[..., i] * a1[..., j] - prev[..., j] * a1[..., i])
        out[..., m + 1 + c] = np.cumsum(inc, axis=-1)
    a3 = 0.5 * sigma * (np.asarray(bds) - np.asarray(sdb))
    inc3 = a3 + 0.5 * (prev * h - t_prev * a1)
    out[..., m + 1 + len(pairs):] = np.cumsum(inc3, axis=-2)
    return out


def batch_tangent(batch: DriverBatch, sigma: float = 1.0) -> np.ndarray:
    return tangent_history(batch.dB, batch.area, batch.sdb, batch.bds, batch.h, sigma)


def tangent_simulate(driver: DriverPath, sigma: float = 1.0) -> list[TangentState]:
    d = check_dim(driver.m)
    H = tangent_history(driver.dB, driver.area, driver.sdb, driver.bds, driver.h, sigma)
    n = H.shape[-1]
    states = [TangentState(0.0, AlgebraElement(np.zeros(n), d))]
    for k in range(H.shape[0]):
        states.append(TangentState((k + 1) * driver.h, AlgebraElement(H[k], d)))
    return states


def tangent_endpoints(seed: int, T: float, N: int, d: int, n_steps: int = 50, s: int = 4,
                      sigma: float = 1.0, stream: int = 0) -> np.ndarray:
    """u_T for N independent paths on a grid of n_steps steps."""
    h = T / n_steps
    out = [batch_tangent(b, sigma)[:, -1] for b in iter_chunks(seed, T, h, d, N, s, stream)]
    return np.concatenate(out)


def scaling_law_test(eps: float, t: float, N: int, seed: int, d: int = 2,
                     n_steps: int = 50, s: int = 4, stream: int = 0,
                     alpha: float = 0.01) -> dict:
    """Two-sample KS comparison of u_{eps^2 t} against T_eps(u_t).

    Both samples use the same number of steps, so the discrete laws obey the
    scaling identity exactly and the KS statistics follow their null law.
    """
    if not 0 < eps <= 1:
        raise InvalidParams(f"eps must lie in (0, 1], got {eps}")
    small = tangent_endpoints(seed, eps * eps * t, N, d, n_steps, s, stream=2 * stream)
    big = dilate(eps, tangent_endpoints(seed, t, N, d, n_steps, s, stream=2 * stream + 1), d)
    names = GradedIndex(d).names
    crit = math.sqrt(-math.log(alpha / 2) / 2) * math.sqrt(2.0 / N)
    coords = {}
    for k, name in enumerate(names):
        if k == d:
            exact = bool(np.all(small[:, k] == big[:, k]) or
                         np.allclose(small[:, k], big[:, k], rtol=1e-13, atol=0))
            coords[name] = {"deterministic": True, "exact": exact}
            continue
        r = stats.ks_2samp(small[:, k], big[:, k])
        coords[name] = {"deterministic": False, "ks": float(r.statistic),
                        "pvalue": float(r.pvalue), "pass": bool(r.statistic < crit)}
    return {"eps": eps, "t": t, "N": N, "critical_value": crit, "coords": coords}


def scaling_trials(eps: float, t: float, N: int, trials: int, seed: int, d: int = 2,
                   n_steps: int = 50, s: int = 4) -> dict:
    """Pass fraction per coordinate over repeated independent KS trials."""
    names = GradedIndex(d).names
    passes = {nm: 0 for nm in names if nm != "u0"}
    exact = True
    for k in range(trials):
        rep = scaling_law_test(eps, t, N, seed, d, n_steps, s, stream=k)
        for nm, r in rep["coords"].items():
            if r["deterministic"]:
                exact &= r["exact"]
            else:
                passes[nm] += int(r["pass"])
    return {"trials": trials, "pass_fraction": {k: v / trials for k, v in passes.items()},
            "u0_exact": bool(exact)}


# -- occupation --------------------------------------------------------------

def slot_half_widths(d: int, widths: Sequence[float]) -> np.ndarray:
    w = np.asarray(widths, dtype=float)
    if w.shape != (3,) or np.any(w <= 0):
        raise InvalidParams(f"need three positive per-layer half-widths, got {widths}")
    return w[np.array(GradedIndex(d).orders) - 1]


def untied_step(h: float, edges: Sequence[float], min_gap: float = 0.25) -> float:
    """Largest step h' <= h keeping every time edge at least ``min_gap`` steps
    away from the grid.

    The tangent u_0 lands exactly on grid times while a coupled diffusion
    does not, so a box edge on the grid turns rounding into a systematic
    one-step discrepancy between the two occupation counts.
    """
    edges = [e for e in edges if e > 0]
    for k in range(200):
        hh = h * (1.0 - 0.005 * k)
        if all(abs(e / hh - round(e / hh)) >= min_gap for e in edges):
            return hh
    return h


def box_volume(hw: np.ndarray) -> float:
    return float(np.prod(2.0 * np.asarray(hw)))


def in_boxes(coords: np.ndarray, centers: np.ndarray, hw: np.ndarray) -> np.ndarray:
    """Boolean (..., P) membership of points (..., n) in boxes (P, n) +- hw (P, n)."""
    return np.all(np.abs(coords[..., None, :] - centers) <= hw, axis=-1)


class OccupationAccumulator:
    """Running per-path occupation sums for a fixed family of boxes."""

    def __init__(self, centers: np.ndarray, hw: np.ndarray):
        self.centers = np.atleast_2d(np.asarray(centers, dtype=float))
        self.hw = np.broadcast_to(np.asarray(hw, dtype=float), self.centers.shape).copy()
        P = len(self.centers)
        self.total = np.zeros(P)
        self.total_sq = np.zeros(P)
        self.hits = np.zeros(P, dtype=np.int64)
        self.N = 0

    def add(self, coords: np.ndarray, h: float, alive: np.ndarray | None = None) -> np.ndarray:
        """coords (C, n_steps, n); ``alive`` masks steps after killing. Returns per-path times."""
        inside = in_boxes(coords, self.centers, self.hw)  # (C, n_steps, P)
        if alive is not None:
            inside &= alive[..., None]
        return self.add_times(h * inside.sum(axis=1))

    def add_times(self, times: np.ndarray) -> np.ndarray:
        """Fold in per-path occupation times of shape (C, P)."""
        self.total += times.sum(axis=0)
        self.total_sq += (times ** 2).sum(axis=0)
        self.hits += (times > 0).sum(axis=0)
        self.N += times.shape[0]
        return times

    def mean_time(self) -> tuple[np.ndarray, np.ndarray]:
        N = max(self.N, 1)
        mean = self.total / N
        var = np.maximum(self.total_sq / N - mean ** 2, 0.0) * N / max(N - 1, 1)
        return mean, np.sqrt(var / N)


def occupation_scaling(eps: float, center, widths, N: int, seed: int, d: int = 2,
                       h: float | None = None, s: int = 4, sigma: float = 1.0) -> dict:
    """Compare E[time in T_eps A] with eps^2 E[time in A] on independent samples.

    Both sides use the same step h, so discretization enters both and the
    comparison tests the continuous-time identity up to O(h).
    """
    center = np.asarray(center, dtype=float)
    hw = slot_half_widths(d, widths)
    c_small = dilate(eps, center, d)
    hw_small = dilate(eps, hw, d)
    T_big = center[d] + hw[d]
    T_small = c_small[d] + hw_small[d]
    if T_small <= 0:
        raise InvalidParams("box lies entirely in the past half-space")
    if h is None:
        h = T_small / 200
    res = {}
    for tag, c, w, T, stream in (("A", center, hw, T_big, 0), ("TA", c_small, hw_small, T_small, 1)):
        acc = OccupationAccumulator(c, w)
        for b in iter_chunks(seed, T, h, d, N, s, stream):
            acc.add(batch_tangent(b, sigma), h)
        m, se = acc.mean_time()
        res[tag] = (float(m[0]), float(se[0]))
    lhs, lhs_se = res["TA"]
    rhs, rhs_se = eps ** 2 * res["A"][0], eps ** 2 * res["A"][1]
    return {"eps": eps, "time_in_TA": lhs, "time_in_TA_se": lhs_se,
            "eps2_time_in_A": rhs, "eps2_time_in_A_se": rhs_se,
            "ratio": lhs / rhs if rhs > 0 else math.nan, "h": h, "N": N}


@dataclass(frozen=True)
class PhiRow:
    probe: np.ndarray
    phi: float
    stderr: float
    upper: float  # one-sided 95% bound; equals phi unless no path hit the box
    hits: int
    N: int
    half_widths: np.ndarray
    horizon: float


def probe_widths(probes: np.ndarray, d: int, widths=DEFAULT_WIDTHS,
                 scale_to_norm: bool = True) -> np.ndarray:
    """Per-slot half-widths (P, n), dilated by the probe norm when requested."""
    hw = slot_half_widths(d, widths)
    P = np.atleast_2d(probes)
    if not scale_to_norm:
        return np.broadcast_to(hw, P.shape).copy()
    r = np.atleast_1d(hnorm(P, d))
    r = np.where(r > 0, r, 1.0)
    return hw * r[:, None] ** np.array(GradedIndex(d).orders)


def phi_estimate(probes, N: int, seed: int, d: int = 2, widths=DEFAULT_WIDTHS,
                 h: float = 1e-2, s: int = 4, sigma: float = 1.0,
                 scale_to_norm: bool = True, stream: int = 0) -> list[PhiRow]:
    """Occupation-density estimate of the tangent Green function at probes.

    The u_0 coordinate equals elapsed time, so simulating up to the largest
    probe's u_0 + half-width loses nothing.
    """
    P = np.atleast_2d(np.array([p.coords if isinstance(p, AlgebraElement) else p
                                for p in np.atleast_2d(probes)], dtype=float))
    hw = probe_widths(P, d, widths, scale_to_norm)
    horizon = float(np.max(P[:, d] + hw[:, d]))
    acc = OccupationAccumulator(P, hw)
    if horizon > 0:
        T = max(horizon, h)
        for b in iter_chunks(seed, T, h, d, N, s, stream):
            acc.add(batch_tangent(b, sigma), h)
    else:
        acc.N = N
    return phi_rows(acc, P, hw, max(horizon, 0.0), d)


def phi_rows(acc: OccupationAccumulator, P, hw, horizon, d: int) -> list[PhiRow]:
    mean, se = acc.mean_time()
    rows = []
    for k in range(len(P)):
        vol = box_volume(hw[k])
        phi = mean[k] / vol
        upper = phi
        if acc.hits[k] == 0:
            # rule of three on the hit probability times the longest possible stay
            upper = 3.0 / max(acc.N, 1) * 2 * hw[k, d] / vol
        rows.append(PhiRow(P[k].copy(), float(phi), float(se[k] / vol), float(upper),
                           int(acc.hits[k]), acc.N, hw[k].copy(), horizon))
    return rows


# -- coupled Taylor remainder -----------------------------------------------

def taylor_remainder_test(ladder: Sequence[float], T: float, N: int, seed: int, d: int = 2,
                          h: float = 1e-2, s: int = 4, sigma: float = 1.0,
                          scheme: str = "exponential-midpoint", stream: int = 0) -> dict:
    """sup_t |v^eps_t - u_t| / eps on shared drivers, for each eps in the ladder."""
    ladder = [float(e) for e in ladder]
    if any(e <= 0 or e > 1 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
        raise InvalidParams(f"ladder must be decreasing within (0, 1], got {ladder}")
    midpoint = scheme == "exponential-midpoint"
    rem = [[] for _ in ladder]
    censored = np.zeros(len(ladder), dtype=int)
    for b in iter_chunks(seed, T, h, d, N, s, stream):
        u = batch_tangent(b, sigma)
        v, fail, _ = batch_history(b, ladder, sigma, d, midpoint)
        for e, eps in enumerate(ladder):
            ok = fail[:, e] < 0
            censored[e] += int((~ok).sum())
            diff = np.linalg.norm(v[ok, e] - u[ok], axis=-1).max(axis=-1) / eps
            rem[e].append(diff)
    rows = []
    q50, q90 = [], []
    for e, eps in enumerate(ladder):
        r = np.concatenate(rem[e])
        qs = np.quantile(r, [0.5, 0.9, 0.99]) if r.size else np.full(3, np.nan)
        q50.append(qs[0])
        q90.append(qs[1])
        rows.append({"eps": eps, "median": float(qs[0]), "q90": float(qs[1]),
                     "q99": float(qs[2]), "censored": int(censored[e]), "paths": int(r.size)})
    ratios90 = [float(q90[k + 1] / q90[k]) for k in range(len(ladder) - 1)]
    ratios50 = [float(q50[k + 1] / q50[k]) for k in range(len(ladder) - 1)]
    return {"T": T, "N": N, "h": h, "scheme": scheme, "rows": rows,
            "q90_ratios": ratios90, "median_ratios": ratios50}
