"""Reference computations that share no code with the package."""

import itertools
import math

import numpy as np


def series_expm(A, terms=30):
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for k in range(1, terms + 1):
        term = term @ A / k
        out = out + term
    return out


def algebra_matrix(u, d):
    """Poincare algebra matrix from graded coordinates, written out by hand."""
    D = d + 2
    M = np.zeros((D, D))
    for i in range(d):
        M[0, i + 1] = M[i + 1, 0] = u[i]
    M[0, D - 1] = u[d]
    k = d + 1
    for i in range(d):
        for j in range(i + 1, d):
            M[i + 1, j + 1] = u[k]
            M[j + 1, i + 1] = -u[k]
            k += 1
    for i in range(d):
        M[i + 1, D - 1] = u[k + i]
    return M


def matrix_coords(M, d):
    D = d + 2
    u = [M[0, i + 1] for i in range(d)] + [M[0, D - 1]]
    u += [M[i + 1, j + 1] for i in range(d) for j in range(i + 1, d)]
    u += [M[i + 1, D - 1] for i in range(d)]
    return np.array(u)


def log_near_identity(M, terms=200):
    X = M - np.eye(M.shape[0])
    out = np.zeros_like(M)
    P = np.eye(M.shape[0])
    for k in range(1, terms + 1):
        P = P @ X
        out += (-1) ** (k + 1) * P / k
    return out


def graded_norm(u, d):
    Q = d * d + 3 * d + 2
    u = np.asarray(u, float)
    s1 = np.sum(u[..., :d] ** 2, axis=-1)
    s2 = np.sum(u[..., d:d + 1 + d * (d - 1) // 2] ** 2, axis=-1)
    s3 = np.sum(u[..., -d:] ** 2, axis=-1)
    return (s1 ** (Q / 2) + s2 ** (Q / 4) + s3 ** (Q / 6)) ** (1 / Q)


def fine_brownian(rng, N, n, T, m):
    dB = rng.standard_normal((N, n, m)) * math.sqrt(T / n)
    B = np.concatenate([np.zeros((N, 1, m)), np.cumsum(dB, axis=1)], axis=1)
    return B, dB


def fine_levy_area(B, dB):
    """1/2 int (B^1 dB^2 - B^2 dB^1) by the trapezoid (Stratonovich) rule."""
    mid = 0.5 * (B[:, :-1] + B[:, 1:])
    return 0.5 * np.sum(mid[..., 0] * dB[..., 1] - mid[..., 1] * dB[..., 0], axis=1)


def fine_u10(B, dB, T):
    """1/2 (int B ds - int s dB) for the first component on a fine grid."""
    n = dB.shape[1]
    h = T / n
    mid = 0.5 * (B[:, :-1, 0] + B[:, 1:, 0])
    s_mid = (np.arange(n) + 0.5) * h
    return 0.5 * (np.sum(mid, axis=1) * h - np.sum(s_mid * dB[..., 0], axis=1))


def radial_speed(d, T, N=20000, h=5e-4, seed=0, t0=1e-4):
    """Mean r_T / T for dr = dbeta + (d-1)/2 coth(r) dt, started near 0 from
    the flat Bessel law at time t0."""
    rng = np.random.default_rng(seed)
    r = np.linalg.norm(rng.standard_normal((N, d)) * math.sqrt(t0), axis=1)
    for _ in range(int(round((T - t0) / h))):
        r = np.abs(r + rng.standard_normal(N) * math.sqrt(h) + 0.5 * (d - 1) / np.tanh(r) * h)
    return float(r.mean() / T), float(r.std() / T / math.sqrt(N))


def descents(perm):
    return sum(1 for a, b in zip(perm, perm[1:]) if a > b)


def strichartz_weights(l):
    """Weight of every permutation of 1..l in the Strichartz log formula."""
    return {p: (-1) ** descents(p) / (l * l * math.comb(l - 1, descents(p)))
            for p in itertools.permutations(range(1, l + 1))}


def bch_numeric(u, v, eps, d):
    Eu = series_expm(algebra_matrix(-np.asarray(u) * _weights(eps, d), d))
    Ev = series_expm(algebra_matrix(np.asarray(v) * _weights(eps, d), d))
    w = matrix_coords(log_near_identity(Eu @ Ev), d)
    return w / _weights(eps, d)


def _weights(eps, d):
    return np.array([eps] * d + [eps ** 2] * (1 + d * (d - 1) // 2) + [eps ** 3] * d)
