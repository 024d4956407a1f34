"""Left-invariant SDE on the Poincare group and its Dudley projection.

The exponential Euler scheme multiplies on the right by
``exp(sigma * sum_i dB^i E_i + h E_0)``. The exponential midpoint scheme is
the log-ODE (Magnus) step: it adds the step Levy area on ``E_ij`` and the
step time-area on ``E_i0``, so the increment is the truncated
log-signature of the driver over the step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import _kernels as K
from .driver import DriverBatch, DriverPath, iter_chunks, n_steps_for
from .errors import ChartOverflow, InsufficientPaths, InvalidParams, IsometryDrift
from .graded import GradedIndex, dilate, hnorm
from .lorentz import AlgebraElement, GroupElement, check_dim

SCHEMES = ("exponential-euler", "exponential-midpoint")


@dataclass(frozen=True)
class DiffusionConfig:
    d: int = 2
    sigma: float = 1.0
    h: float = 1e-3
    T: float = 1.0
    R: float = math.inf
    scheme: str = "exponential-euler"
    record_every: int = 1
    drift_tol: float = 1e-8

    def __post_init__(self):
        check_dim(self.d)
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidParams(f"sigma must be positive, got {self.sigma}")
        if not (self.h > 0 and math.isfinite(self.h)):
            raise InvalidParams(f"step h must be positive, got {self.h}")
        if not self.T >= self.h * (1 - 1e-12):
            raise InvalidParams(f"horizon T={self.T} must be at least h={self.h}")
        if not self.R > 0:
            raise InvalidParams(f"radius R must be positive, got {self.R}")
        if self.scheme not in SCHEMES:
            raise InvalidParams(f"scheme must be one of {SCHEMES}, got {self.scheme!r}")
        if self.record_every < 1:
            raise InvalidParams("record_every must be >= 1")

    @property
    def midpoint(self) -> bool:
        return self.scheme == "exponential-midpoint"

    @property
    def n_steps(self) -> int:
        return n_steps_for(self.T, self.h)


@dataclass(frozen=True, eq=False)
class PathSample:
    """Recorded states of one path.

    ``matrices`` holds the (d+2)x(d+2) states, ``rel`` the exp-chart
    coordinates relative to the start (NaN where the chart failed and no
    exit radius was set). ``exit_time`` is None when censored at T.
    """

    times: np.ndarray
    matrices: np.ndarray
    rel: np.ndarray
    exit_time: float | None
    max_drift: float
    d: int

    @property
    def censored(self) -> bool:
        return self.exit_time is None

    @property
    def states(self) -> list[GroupElement]:
        return [GroupElement.from_matrix(M) for M in self.matrices]

    def state(self, k: int) -> GroupElement:
        return GroupElement.from_matrix(self.matrices[k])

    def relative(self) -> list[AlgebraElement]:
        return [AlgebraElement(r, self.d) for r in self.rel]


def integrate(cfg: DiffusionConfig, driver: DriverPath,
              start: GroupElement | None = None) -> PathSample:
    if driver.m != cfg.d:
        raise InvalidParams(f"driver has m={driver.m} components, need d={cfg.d}")
    if abs(driver.h - cfg.h) > 1e-12 * cfg.h:
        raise InvalidParams(f"driver step {driver.h} differs from config step {cfg.h}")
    start = start or GroupElement.identity(cfg.d)
    n = min(cfg.n_steps, driver.n_steps)
    states, rel, idx, n_rec, exit_step, status, drift = K.integrate_path(
        driver.dB, driver.area, driver.sdb, driver.bds, n, cfg.h, cfg.sigma,
        cfg.midpoint, start.matrix(), float(cfg.R), cfg.record_every, cfg.drift_tol, cfg.d)
    if status == 1:
        raise ChartOverflow(
            f"path left the log chart at step {exit_step} before reaching radius {cfg.R}")
    if status == 2:
        raise IsometryDrift(f"Lorentz invariants drifted by {drift:.3e} > {cfg.drift_tol:g}")
    exit_time = None if exit_step < 0 else exit_step * cfg.h
    return PathSample(idx[:n_rec] * cfg.h, states[:n_rec].copy(), rel[:n_rec].copy(),
                      exit_time, float(drift), cfg.d)


def simulate_batch(cfg: DiffusionConfig, seed: int, N: int, s: int = 1,
                   start: GroupElement | None = None, stream: int = 0) -> Iterator[PathSample]:
    for b in iter_chunks(seed, cfg.T, cfg.h, cfg.d, N, s, stream, keep_fine=False):
        for k in range(b.size):
            p = DriverPath(seed, cfg.T, cfg.h, cfg.d, s, b.first_index + k,
                           b.dB[k], b.area[k], b.sdb[k], b.bds[k], np.empty((0, s, cfg.d)))
            yield integrate(cfg, p, start)


def dudley_project(p: PathSample) -> tuple[np.ndarray, np.ndarray]:
    """(g_t e0, xi_t) along the recorded path, arrays of shape (K, d+1)."""
    d = p.d
    return p.matrices[:, : d + 1, 0].copy(), p.matrices[:, : d + 1, d + 1].copy()


def rescaled_view(p: PathSample, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled times s/eps^2 and coordinates T_{1/eps}(relative coords).

    The path must have been started at the base point of the view.
    """
    if not eps > 0:
        raise InvalidParams(f"eps must be positive, got {eps}")
    if np.isnan(p.rel).any():
        raise ChartOverflow("relative coordinates unavailable: path left the chart")
    return p.times / eps ** 2, dilate(1.0 / eps, p.rel, p.d)


def hyperbolic_distance_from_origin(v: np.ndarray) -> np.ndarray:
    # <e0, v> = v^0 for a point on the upper hyperboloid
    return np.arccosh(np.maximum(np.asarray(v)[..., 0], 1.0))


def radial_diagnostic(paths: Sequence[PathSample], min_paths: int = 1000,
                      min_T: float = 20.0) -> float:
    """Mean hyperbolic distance travelled per unit time by g_t e0."""
    if len(paths) < min_paths:
        raise InsufficientPaths(f"need at least {min_paths} paths, got {len(paths)}")
    r = []
    for p in paths:
        T = float(p.times[-1])
        if T < min_T:
            raise InsufficientPaths(f"need horizon >= {min_T}, got {T}")
        v = p.matrices[-1, : p.d + 1, 0]
        r.append(float(hyperbolic_distance_from_origin(v)) / T)
    return float(np.mean(r))


def radial_speed(d: int, N: int, T: float, h: float, seed: int,
                 sigma: float = 1.0) -> tuple[float, float]:
    """Endpoint-only runs feeding :func:`radial_diagnostic`; returns (mean, stderr)."""
    n = n_steps_for(T, h)
    cfg = DiffusionConfig(d=d, sigma=sigma, h=h, T=T, record_every=n, drift_tol=1e-6)
    paths = list(simulate_batch(cfg, seed, N, s=1))
    speeds = np.array([hyperbolic_distance_from_origin(p.matrices[-1, : d + 1, 0]) / T
                       for p in paths])
    return radial_diagnostic(paths), float(speeds.std(ddof=1) / math.sqrt(len(speeds)))


# -- batched rescaled histories ----------------------------------------------

def batch_history(batch: DriverBatch, eps_list: Sequence[float], sigma: float, d: int,
                  midpoint: bool, starts: np.ndarray | None = None):
    """Rescaled exp-chart coordinates for every path of a batch.

    Returns (coords, fail_step, xi0_drops); see :func:`_kernels.evolve_history`.
    """
    eps_arr = np.asarray(eps_list, dtype=float)
    if starts is None:
        starts = np.broadcast_to(np.eye(d + 2), (len(eps_arr), d + 2, d + 2)).copy()
    return K.evolve_history(batch.dB, batch.area, batch.sdb, batch.bds, batch.h,
                            float(sigma), eps_arr, bool(midpoint),
                            np.ascontiguousarray(starts), d)


def first_exit(coords: np.ndarray, radius: float, d: int):
    """First step index with hnorm >= radius (n_steps if none) and a mask of
    paths whose chart failed before that step.

    ``coords`` has shape (..., n_steps, n); failed steps hold NaN.
    """
    r = hnorm(coords, d)
    n_steps = coords.shape[-2]
    out = np.nan_to_num(r, nan=-1.0) >= radius
    k = np.where(out.any(axis=-1), out.argmax(axis=-1), n_steps)
    nan = np.isnan(r)
    first_nan = np.where(nan.any(axis=-1), nan.argmax(axis=-1), n_steps)
    return k, first_nan < k


def exit_times(cfg: DiffusionConfig, seed: int, N: int, s: int = 1,
               stream: int = 0) -> np.ndarray:
    """Grid exit times from the homogeneous ball of radius cfg.R (inf if censored)."""
    if not math.isfinite(cfg.R):
        raise InvalidParams("exit times need a finite radius")
    out = []
    for b in iter_chunks(seed, cfg.T, cfg.h, cfg.d, N, s, stream):
        coords, _, _ = batch_history(b, [1.0], cfg.sigma, cfg.d, cfg.midpoint)
        k, overflow = first_exit(coords[:, 0], cfg.R, cfg.d)
        if overflow.any():
            raise ChartOverflow(f"{int(overflow.sum())} paths left the chart before radius {cfg.R}")
        out.append(np.where(k < coords.shape[2], (k + 1) * cfg.h, np.inf))
    return np.concatenate(out) if out else np.empty(0)


def time_upper_bound(centers: np.ndarray, half_widths: np.ndarray, d: int,
                     eps: float = 1.0) -> float:
    """Rescaled-time bound after which no path can sit in the given boxes.

    Uses xi^0 >= t (the translation increments of the exponential steps are
    future timelike with unit-speed time component) together with
    |xi - v| <= ((e^k - 1 - k)/k)|v| for the exponential of an algebra
    element with translation part v and Lorentz part of norm k.
    """
    g = GradedIndex(d)
    c = np.abs(np.atleast_2d(centers))
    w = np.asarray(half_widths, dtype=float)
    hi = c + w
    l1, l2, l3 = g.layer(1), g.layer(2), g.layer(3)
    v = np.sqrt((eps ** 2 * hi[:, d]) ** 2 + np.sum((eps ** 3 * hi[:, l3]) ** 2, axis=1))
    rot = hi[:, l2][:, 1:]
    k = np.sqrt(2 * np.sum((eps * hi[:, l1]) ** 2, axis=1) + 2 * np.sum((eps ** 2 * rot) ** 2, axis=1))
    factor = np.where(k > 1e-12, (np.expm1(k) - k) / np.maximum(k, 1e-12), 0.0)
    return float(np.max(v * (1 + factor)) / eps ** 2)
