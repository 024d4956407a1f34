"""Invariant suites run by ``dudley selftest``.

Each suite returns a list of :class:`Check` rows; a suite passes when all of
its rows pass.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .driver import (MultiIndex, accumulated_area, chen_strichartz_c, coarsen, iter_chunks,
                     sample_path, signature, step_records)
from .graded import (alpha_numeric, angular, bch_alpha_beta, bch_rescaled, dilate,
                     graded_dimension, hnorm, quasi_triangle_constant, random_elements)
from .lorentz import (AlgebraElement, basis_element, bracket, exp_algebra, group_inv, group_mul,
                      log_group, lorentz_defect, n_slots)


@dataclass
class Check:
    suite: str
    name: str
    value: float
    limit: float
    passed: bool

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.suite}: {self.name} value={self.value:.3e} limit={self.limit:.3e}"


def _chk(suite, name, value, limit, le=True):
    value = float(value)
    ok = value <= limit if le else value >= limit
    return Check(suite, name, value, float(limit), bool(ok and math.isfinite(value)))


def algebra_suite(seed: int = 0, dims=range(2, 7)) -> list[Check]:
    out = []
    rng = np.random.default_rng(seed)
    for d in dims:
        E0 = basis_element("time", d)
        err = 0.0
        for i in range(1, d + 1):
            Ei = basis_element("first", d, i)
            err = max(err, np.abs((bracket(Ei, E0) - basis_element("boostdrift", d, i)).coords).max())
            err = max(err, np.abs((bracket(Ei, bracket(Ei, E0)) - E0).coords).max())
            for j in range(i + 1, d + 1):
                Ej = basis_element("first", d, j)
                err = max(err, np.abs((bracket(Ei, Ej) - basis_element("rotation", d, i, j)).coords).max())
        out.append(_chk("algebra", f"bracket table d={d}", err, 1e-12))
        jac = 0.0
        for _ in range(20):
            X, Y, Z = (AlgebraElement(rng.standard_normal(n_slots(d)), d) for _ in range(3))
            J = bracket(X, bracket(Y, Z)) + bracket(Y, bracket(Z, X)) + bracket(Z, bracket(X, Y))
            jac = max(jac, np.abs(J.coords).max())
        out.append(_chk("algebra", f"Jacobi d={d}", jac, 1e-9))
        rt = 0.0
        grp = 0.0
        for _ in range(20):
            A = AlgebraElement(0.5 * rng.standard_normal(n_slots(d)), d)
            g = exp_algebra(A)
            rt = max(rt, np.abs(log_group(g).coords - A.coords).max())
            grp = max(grp, lorentz_defect(g.lorentz))
            e = group_mul(g, group_inv(g))
            grp = max(grp, np.abs(e.matrix() - np.eye(d + 2)).max())
        out.append(_chk("algebra", f"exp/log round trip d={d}", rt, 1e-9))
        out.append(_chk("algebra", f"group inverse and isometry d={d}", grp, 1e-9))
    return out


def grading_suite(seed: int = 0, triples: int = 100_000) -> list[Check]:
    out = []
    rng = np.random.default_rng(seed)
    bad = sum(graded_dimension(d) != d * d + 3 * d + 2 or
              graded_dimension(d) != d + 2 * (d * (d - 1) // 2 + 1) + 3 * d for d in range(2, 7))
    out.append(_chk("grading", "Q(d) = d^2+3d+2 for d=2..6", bad, 0))
    hom = 0.0
    ang = 0.0
    for d in range(2, 7):
        U = rng.standard_normal((200, n_slots(d)))
        r = hnorm(U, d)
        for eps in (1e-3, 0.37, 5.0):
            hom = max(hom, np.max(np.abs(hnorm(dilate(eps, U, d), d) / (eps * r) - 1)))
        th = angular(U, d)
        ang = max(ang, np.max(np.abs(hnorm(th, d) - 1)), np.max(np.abs(angular(th, d) - th)))
    out.append(_chk("grading", "hnorm homogeneity (relative)", hom, 1e-12))
    out.append(_chk("grading", "angular idempotence", ang, 1e-12))
    c0 = quasi_triangle_constant(triples, seed + 1, 2, 0.1)
    out.append(_chk("grading", f"quasi-triangle constant on {triples} triples", c0, 10.0))
    return out


def bch_suite(seed: int = 0, pairs: int = 1000, d: int = 2) -> list[Check]:
    rng = np.random.default_rng(seed)
    u = random_elements(rng, pairs, d)
    v = random_elements(rng, pairs, d)
    alpha, beta = bch_alpha_beta(u, v, d)
    ladder = [2.0 ** -k for k in range(1, 8)]
    errs = []
    for eps in ladder:
        w = bch_rescaled(u, v, eps, d)
        errs.append(np.abs(hnorm(w, d) / alpha - 1))
    errs = np.array(errs)
    # per pair the eps^2 and eps^4 terms can cancel on coarse rungs, so the
    # ladder is judged on the worst pair at each rung
    worst = errs.max(axis=1)
    mono = float(np.all(np.diff(worst) < 0))
    w = bch_rescaled(u, v, ladder[-1], d)
    beta_err = np.max(np.abs(angular(w, d) - beta))
    rich = alpha_numeric(u, v, d)["extrapolated"]
    return [
        _chk("bch", "alpha relative error at eps=2^-7", errs[-1].max(), 1e-2),
        _chk("bch", "worst-pair error decreases along 2^-1..2^-7", mono, 1.0, le=False),
        _chk("bch", "beta error at eps=2^-7", beta_err, 1e-2),
        _chk("bch", "Richardson alpha over (0.1, 0.05, 0.025)", np.max(np.abs(rich / alpha - 1)), 1e-3),
    ]


def driver_suite(seed: int = 0, paths: int = 100_000, d: int = 2) -> list[Check]:
    out = []
    t, n, s = 1.0, 50, 8
    h = t / n
    acc = 0.0
    for b in iter_chunks(seed, t, h, d, paths, s):
        acc += float(np.sum(accumulated_area(b.dB, b.area)[:, -1] ** 2))
    K = n * s
    # the piecewise-linear path with K pieces has E[A^2] = t^2/4 (1 - 1/K)
    m2 = acc / paths
    out.append(_chk("driver", f"Levy area E[A^2] vs t^2/4 ({paths} paths)",
                    abs(m2 / (t * t / 4) - 1), 0.02))
    out.append(_chk("driver", "discretization factor 1-1/K", 1 / K, 0.01))
    p = sample_path(seed, 1.0, 0.05, d, 16, index=3)
    err1 = 0.0
    err_area = 0.0
    for tt in (0.25, 0.5, 1.0):
        sig = signature(p, tt)
        k = int(round(tt / p.h))
        B = p.dB[:k].sum(axis=0)
        for i in range(1, d + 1):
            err1 = max(err1, abs(chen_strichartz_c([i], p, tt, sig) - B[i - 1]))
        err1 = max(err1, abs(chen_strichartz_c([0], p, tt, sig) - tt))
        A = accumulated_area(p.dB[:k], p.area[:k])[-1]
        c = chen_strichartz_c([1, 2], p, tt, sig) - chen_strichartz_c([2, 1], p, tt, sig)
        err_area = max(err_area, abs(c - A))
    out.append(_chk("driver", "c^(i) = B^i and c^(0) = t", err1, 1e-12))
    out.append(_chk("driver", "c^(12) - c^(21) = Levy area from step records", err_area, 1e-12))
    cons = 0.0
    for f in (2, 4, 20):
        q = coarsen(p, f)
        cons = max(cons, abs(accumulated_area(q.dB, q.area)[-1] - accumulated_area(p.dB, p.area)[-1]))
    out.append(_chk("driver", "area invariant under coarsening", cons, 1e-12))
    # dropping the within-step areas leaves a gap with E[gap^2] = T^2/4 (1/k - 1/K)
    T, n, s = 0.8, 16, 16
    fine = np.concatenate([b.fine for b in iter_chunks(seed, T, T / n, d, 4096, s, stream=1,
                                                       keep_fine=True)])
    full = accumulated_area(*step_records(fine, T / n)[:2])[:, -1]
    worst = 0.0
    for k in (4, 16, 64):
        coarse = fine.reshape(len(fine), k, -1, d)
        dB, _ = step_records(coarse, T / k)[:2]
        gap = full - accumulated_area(dB, np.zeros((len(fine), k, 1)))[:, -1]
        theory = T * T / 4 * (1 / k - 1 / (n * s))
        worst = max(worst, abs(np.mean(gap ** 2) / theory - 1))
    out.append(_chk("driver", "record-free area gap matches 1/k refinement law", worst, 0.1))
    return out


SUITES = {"algebra": algebra_suite, "grading": grading_suite, "bch": bch_suite, "driver": driver_suite}


def run(names=None, seed: int = 0, log=print) -> tuple[bool, list[Check], float]:
    names = list(SUITES) if names is None else list(names)
    t0 = time.perf_counter()
    rows = []
    for nm in names:
        part = SUITES[nm](seed)
        rows.extend(part)
        if log is not None:
            for r in part:
                log(r.line())
    return all(r.passed for r in rows), rows, time.perf_counter() - t0
