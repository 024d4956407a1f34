"""Seeded Brownian drivers and Chen-Strichartz coefficients.

Random stream discipline
------------------------
Paths are generated in fixed chunks of :data:`CHUNK` paths. Path ``i`` of
stream ``k`` under root seed ``s`` always lives in chunk ``i // CHUNK``,
whose generator is ``PCG64(SeedSequence(entropy=s, spawn_key=(k, i // CHUNK)))``.
A single path therefore has the same bits whether it was produced alone or
as part of a batch, and batches can be produced in any order.

Each coarse step of length ``h`` is refined into ``s`` linear substeps.
The per-step records are exact functionals of that piecewise-linear path:
the increment, the step Levy area and the two time integrals
``int tau dW`` and ``int W dtau`` (local time and local path starting at 0).
"""

from __future__ import annotations

import itertools
import math
import struct
from dataclasses import dataclass
from math import comb
from typing import Iterator, Sequence

import numpy as np
from numba import njit

from .errors import InvalidParams, UnsupportedOrder

CHUNK = 256
DEFAULT_SUBSTEPS = 8
_MAGIC = b"DRVP"


def n_steps_for(T: float, h: float) -> int:
    return int(math.ceil(T / h - 1e-9))


def pair_index(m: int) -> list[tuple[int, int]]:
    """Lexicographic list of pairs (i, j), i < j, 0-based."""
    return [(i, j) for i in range(m) for j in range(i + 1, m)]


@dataclass(frozen=True)
class MultiIndex:
    """Word over {0, 1, ..., m}; letter 0 stands for the time direction."""

    letters: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "letters", tuple(int(a) for a in self.letters))
        if not self.letters or any(a < 0 for a in self.letters):
            raise InvalidParams("multi-index needs at least one non-negative letter")

    @property
    def length(self) -> int:
        return len(self.letters)

    @property
    def order(self) -> int:
        return len(self.letters) + sum(1 for a in self.letters if a == 0)


def descent_count(perm: Sequence[int]) -> int:
    """Number of adjacent descents sigma(j) > sigma(j+1)."""
    p = list(perm)
    if sorted(p) != list(range(1, len(p) + 1)):
        raise InvalidParams(f"not a permutation of 1..{len(p)}: {p}")
    return sum(1 for a, b in zip(p, p[1:]) if a > b)


@dataclass(frozen=True)
class DriverBatch:
    """Per-step records for a contiguous block of paths."""

    first_index: int
    h: float
    dB: np.ndarray    # (C, n_steps, m)
    area: np.ndarray  # (C, n_steps, m(m-1)/2)
    sdb: np.ndarray   # (C, n_steps, m)   int tau dW over the step
    bds: np.ndarray   # (C, n_steps, m)   int W dtau over the step
    fine: np.ndarray | None = None  # (C, n_steps, s, m)

    @property
    def size(self) -> int:
        return self.dB.shape[0]

    def take(self, sl: slice) -> "DriverBatch":
        start = sl.start or 0
        return DriverBatch(
            self.first_index + start, self.h, self.dB[sl], self.area[sl],
            self.sdb[sl], self.bds[sl], None if self.fine is None else self.fine[sl],
        )


@dataclass(frozen=True)
class DriverPath:
    seed: int
    T: float
    h: float
    m: int
    s: int
    index: int
    dB: np.ndarray
    area: np.ndarray
    sdb: np.ndarray
    bds: np.ndarray
    fine: np.ndarray
    stream: int = 0

    @property
    def n_steps(self) -> int:
        return self.dB.shape[0]

    def levy_area(self, i: int, j: int) -> np.ndarray:
        """Step areas for the ordered pair (i, j), 1-based letters."""
        if i == j:
            return np.zeros(self.n_steps)
        a, b = sorted((i - 1, j - 1))
        col = pair_index(self.m).index((a, b))
        sign = 1.0 if i < j else -1.0
        return sign * self.area[:, col]

    @classmethod
    def zero(cls, T: float, h: float, m: int, s: int = 1) -> "DriverPath":
        n = n_steps_for(T, h)
        p = m * (m - 1) // 2
        z = np.zeros
        return cls(0, T, h, m, s, 0, z((n, m)), z((n, p)), z((n, m)), z((n, m)),
                   z((n, s, m)))


def _validate(T, h, m, s):
    if not (h > 0 and np.isfinite(h)):
        raise InvalidParams(f"step h must be positive, got {h}")
    if not (T >= h * (1 - 1e-12)):
        raise InvalidParams(f"horizon T={T} must be at least h={h}")
    if m < 1:
        raise InvalidParams(f"need at least one Brownian component, got m={m}")
    if s < 1:
        raise InvalidParams(f"substep factor must be >= 1, got {s}")


@njit(cache=True)
def _records(fine, h, dB, area, sdb, bds):
    P, n, s, m = fine.shape
    dt = h / s
    W = np.empty(m)
    for p in range(P):
        for k in range(n):
            for i in range(m):
                W[i] = 0.0
                sdb[p, k, i] = 0.0
                bds[p, k, i] = 0.0
            for c in range(area.shape[2]):
                area[p, k, c] = 0.0
            for l in range(s):
                tm = (l + 0.5) * dt
                c = 0
                for i in range(m):
                    for j in range(i + 1, m):
                        area[p, k, c] += W[i] * fine[p, k, l, j] - W[j] * fine[p, k, l, i]
                        c += 1
                for i in range(m):
                    f = fine[p, k, l, i]
                    sdb[p, k, i] += tm * f
                    bds[p, k, i] += (W[i] + 0.5 * f) * dt
                    W[i] += f
            for i in range(m):
                dB[p, k, i] = W[i]
            for c in range(area.shape[2]):
                area[p, k, c] *= 0.5


def step_records(fine: np.ndarray, h: float):
    """Step records from fine increments of shape (..., n_steps, s, m).

    area = 1/2 sum (W^i dW^j - W^j dW^i), sdb = sum tau_mid dW,
    bds = sum (W + dW/2) dt, exact for the piecewise-linear path.
    """
    fine = np.asarray(fine, dtype=float)
    lead = fine.shape[:-3]
    n, s, m = fine.shape[-3:]
    f = np.ascontiguousarray(fine.reshape((-1, n, s, m)))
    P = f.shape[0]
    npair = m * (m - 1) // 2
    dB = np.empty((P, n, m))
    area = np.empty((P, n, npair))
    sdb = np.empty((P, n, m))
    bds = np.empty((P, n, m))
    _records(f, float(h), dB, area, sdb, bds)
    return (dB.reshape(lead + (n, m)), area.reshape(lead + (n, npair)),
            sdb.reshape(lead + (n, m)), bds.reshape(lead + (n, m)))


def _chunk_rng(seed: int, stream: int, chunk: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(stream), int(chunk)))
    return np.random.Generator(np.random.PCG64(ss))


def generate_chunk(seed: int, T: float, h: float, m: int, s: int = DEFAULT_SUBSTEPS,
                   chunk: int = 0, stream: int = 0, keep_fine: bool = False) -> DriverBatch:
    _validate(T, h, m, s)
    n = n_steps_for(T, h)
    rng = _chunk_rng(seed, stream, chunk)
    fine = rng.standard_normal((CHUNK, n, s, m))
    fine *= math.sqrt(h / s)
    dB, area, sdb, bds = step_records(fine, h)
    return DriverBatch(chunk * CHUNK, h, dB, area, sdb, bds, fine if keep_fine else None)


def iter_chunks(seed: int, T: float, h: float, m: int, N: int, s: int = DEFAULT_SUBSTEPS,
                stream: int = 0, keep_fine: bool = False) -> Iterator[DriverBatch]:
    """Batches covering paths 0..N-1 in index order."""
    if N < 0:
        raise InvalidParams(f"path count must be non-negative, got {N}")
    for c in range((N + CHUNK - 1) // CHUNK):
        b = generate_chunk(seed, T, h, m, s, c, stream, keep_fine)
        left = N - c * CHUNK
        yield b if left >= CHUNK else b.take(slice(0, left))


def sample_path(seed: int, T: float, h: float, m: int, s: int = DEFAULT_SUBSTEPS,
                index: int = 0, stream: int = 0) -> DriverPath:
    """Path ``index`` of the given stream; identical to the batch version."""
    if index < 0:
        raise InvalidParams(f"path index must be non-negative, got {index}")
    b = generate_chunk(seed, T, h, m, s, index // CHUNK, stream, keep_fine=True)
    k = index % CHUNK
    return DriverPath(int(seed), float(T), float(h), int(m), int(s), int(index),
                      b.dB[k].copy(), b.area[k].copy(), b.sdb[k].copy(),
                      b.bds[k].copy(), b.fine[k].copy(), int(stream))


def path_from_fine(fine: np.ndarray, h: float, seed: int = 0, index: int = 0) -> DriverPath:
    """Wrap explicit fine increments (n_steps, s, m) as a DriverPath."""
    fine = np.asarray(fine, dtype=float)
    n, s, m = fine.shape
    dB, area, sdb, bds = step_records(fine, h)
    return DriverPath(seed, n * h, h, m, s, index, dB, area, sdb, bds, fine)


def coarsen(path: DriverPath, factor: int) -> DriverPath:
    """Same Brownian path viewed on a grid ``factor`` times coarser."""
    n = path.n_steps
    if n % factor:
        raise InvalidParams(f"{n} steps not divisible by {factor}")
    fine = path.fine.reshape(n // factor, factor * path.s, path.m)
    dB, area, sdb, bds = step_records(fine, path.h * factor)
    return DriverPath(path.seed, path.T, path.h * factor, path.m, path.s * factor,
                      path.index, dB, area, sdb, bds, fine, path.stream)


def accumulated_area(dB: np.ndarray, area: np.ndarray, pair: int = 0) -> np.ndarray:
    """Levy area on [0, t_k] for every step, from step records (..., n_steps, .).

    Chen's relation: A(0, t+h) = A(0, t) + a_k + 1/2 (B_t^i dB^j - B_t^j dB^i).
    """
    i, j = pair_index(dB.shape[-1])[pair]
    B = np.cumsum(dB, axis=-2) - dB
    inc = area[..., pair] + 0.5 * (B[..., i] * dB[..., j] - B[..., j] * dB[..., i])
    return np.cumsum(inc, axis=-1)


# -- signature up to level 3 ---------------------------------------------

@njit(cache=True)
def _signature3(inc):
    """Level 1..3 signature of the piecewise-linear path with given increments."""
    k = inc.shape[1]
    S1 = np.zeros(k)
    S2 = np.zeros((k, k))
    S3 = np.zeros((k, k, k))
    for r in range(inc.shape[0]):
        D = inc[r]
        for a in range(k):
            for b in range(k):
                for c in range(k):
                    S3[a, b, c] += (S2[a, b] * D[c] + 0.5 * S1[a] * D[b] * D[c]
                                    + D[a] * D[b] * D[c] / 6.0)
        for a in range(k):
            for b in range(k):
                S2[a, b] += S1[a] * D[b] + 0.5 * D[a] * D[b]
        for a in range(k):
            S1[a] += D[a]
    return S1, S2, S3


def signature(path: DriverPath, t: float):
    """Signature levels of (time, B^1..B^m) on [0, t]; index 0 is time."""
    if t < 0 or t > path.T + 1e-12:
        raise InvalidParams(f"t={t} outside [0, {path.T}]")
    dt = path.h / path.s
    n_fine = int(round(t / dt))
    flat = path.fine.reshape(-1, path.m)[:n_fine]
    inc = np.empty((n_fine, path.m + 1))
    inc[:, 0] = dt
    inc[:, 1:] = flat
    return _signature3(inc)


def iterated_integral(word: Sequence[int], sig) -> float:
    S1, S2, S3 = sig
    w = tuple(word)
    if len(w) == 1:
        return float(S1[w[0]])
    if len(w) == 2:
        return float(S2[w])
    if len(w) == 3:
        return float(S3[w])
    raise UnsupportedOrder(f"iterated integrals of length {len(w)} are not available")


def chen_strichartz_c(J: MultiIndex | Sequence[int], path: DriverPath, t: float,
                      sig=None) -> float:
    """Descent-weighted permutation sum of iterated Stratonovich integrals.

    The weight of sigma is (-1)^e / (l^2 * binom(l-1, e)) with e the descent
    count and l the word length.
    """
    J = J if isinstance(J, MultiIndex) else MultiIndex(tuple(J))
    if J.order > 3:
        raise UnsupportedOrder(f"order {J.order} > 3 for word {J.letters}")
    if max(J.letters) > path.m:
        raise InvalidParams(f"letter {max(J.letters)} exceeds m={path.m}")
    if sig is None:
        sig = signature(path, t)
    l = J.length
    total = 0.0
    for perm in itertools.permutations(range(1, l + 1)):
        e = descent_count(perm)
        inv = [0] * l
        for pos, v in enumerate(perm):
            inv[v - 1] = pos + 1
        word = [J.letters[inv[k] - 1] for k in range(l)]
        total += (-1) ** e / (l * l * comb(l - 1, e)) * iterated_integral(word, sig)
    return total


# -- binary dump -----------------------------------------------------------

_HEADER = struct.Struct("<4sQddIIQQ")


def dump_path(path: DriverPath, fh) -> None:
    """Little-endian layout: header then per-step records then fine increments.

    header: magic 'DRVP', seed u64, T f64, h f64, m u32, s u32, n_steps u64,
    index u64. Each step record holds dB[m], area[m(m-1)/2], sdb[m], bds[m]
    as f64. The fine block is (n_steps, s, m) f64.
    """
    fh.write(_HEADER.pack(_MAGIC, path.seed & (2**64 - 1), path.T, path.h, path.m,
                          path.s, path.n_steps, path.index))
    rec = np.concatenate([path.dB, path.area, path.sdb, path.bds], axis=1)
    fh.write(np.ascontiguousarray(rec, dtype="<f8").tobytes())
    fh.write(np.ascontiguousarray(path.fine, dtype="<f8").tobytes())


def load_path(fh) -> DriverPath:
    raw = fh.read(_HEADER.size)
    magic, seed, T, h, m, s, n, index = _HEADER.unpack(raw)
    if magic != _MAGIC:
        raise InvalidParams("not a driver dump")
    p = m * (m - 1) // 2
    width = 3 * m + p
    rec = np.frombuffer(fh.read(8 * n * width), dtype="<f8").reshape(n, width)
    fine = np.frombuffer(fh.read(8 * n * s * m), dtype="<f8").reshape(n, s, m)
    return DriverPath(seed, T, h, m, s, index, rec[:, :m].copy(), rec[:, m:m + p].copy(),
                      rec[:, m + p:2 * m + p].copy(), rec[:, 2 * m + p:].copy(), fine.copy())
