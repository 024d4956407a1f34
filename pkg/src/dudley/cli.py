"""Command-line driver: ``dudley <command> [flags]``.

Exit codes: 0 success, 1 failed self-test checks, 2 invalid input,
3 numerical guard (chart overflow, non-convergent log, isometry drift).
``DUDLEY_THREADS`` sets the worker count and ``DUDLEY_OUTDIR`` the directory
for relative output paths.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import config as C
from . import io as dio
from .errors import DudleyError, InvalidParams, NumericalGuard

HELP = {
    "simulate": "simulate the left-invariant diffusion and dump recorded states",
    "tangent": "simulate the tangent process",
    "green": "occupation-density estimate of the killed Green function at probes",
    "scaling-test": "KS tests of the tangent-process scaling law",
    "theorem1": "rescaled Green function against the tangent estimate along an eps ladder",
    "cone": "hitting probabilities of a homogeneous cone from its vertex",
    "capacity": "capacity estimates of cone slices",
    "wiener": "Wiener partial sums from slice capacities",
    "bch-check": "closed-form relative-coordinate limits against numeric extrapolation",
    "selftest": "exact invariant suites (algebra, grading, bch, driver)",
}

FLAG_HELP = {
    "d": "space dimension (2..6)", "seed": "root seed", "paths": "number of paths N",
    "h": "time step", "s": "Brownian substeps per step", "sigma": "noise scale",
    "scheme": "exponential-euler or exponential-midpoint", "T": "horizon",
    "R": "homogeneous-ball radius (inf for none)", "record_every": "record every k-th step",
    "eps": "comma-separated scales", "lam": "slice ratio lambda", "slices": "slice range n0:n1",
    "probes": "probe coordinates, comma-separated, probes separated by ';'",
    "probe_file": "CSV file of probe coordinates", "probe_axis": "use the unit u0-axis probe",
    "widths": "box half-widths per layer", "replications": "independent replications",
    "t": "comma-separated times", "c": "cone aperture on the u0 angular component",
    "past": "use the past cone", "trials": "independent KS trials", "cells": "grid cells per axis",
    "max_sources": "source cells per slice", "weight": "classical or inverse",
    "input": "capacity CSV to read instead of simulating", "pairs": "random pairs",
    "suites": "comma-separated suite names", "out": "output file",
    "format": "csv or json", "plot": "render figures next to the output",
}

BOOL_FLAGS = ("probe_axis", "past", "plot")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dudley", description="Poincare-group diffusion experiments")
    p.add_argument("--version", action="version", version=f"dudley {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")
    for cmd in C.COMMANDS:
        sp = sub.add_parser(cmd, help=HELP[cmd], description=HELP[cmd])
        sp.add_argument("--config", default=None, help="INI config file")
        for name in C.allowed(cmd):
            flag = "--" + name.replace("_", "-")
            if name in BOOL_FLAGS:
                sp.add_argument(flag, dest=name, action=argparse.BooleanOptionalAction,
                                default=argparse.SUPPRESS, help=FLAG_HELP[name])
            else:
                sp.add_argument(flag, dest=name, default=argparse.SUPPRESS, metavar="X",
                                help=FLAG_HELP[name])
    return p


def _out_path(cfg: C.ExperimentConfig) -> Path:
    name = cfg.get("out") or f"{cfg.command}.{cfg.format}"
    path = Path(name)
    if not path.is_absolute():
        path = Path(os.environ.get("DUDLEY_OUTDIR", ".")) / path
    return path


def _set_threads():
    raw = os.environ.get("DUDLEY_THREADS")
    if not raw:
        return
    import numba
    try:
        n = int(raw)
    except ValueError:
        raise InvalidParams(f"DUDLEY_THREADS must be an integer, got {raw!r}") from None
    if not 1 <= n <= numba.config.NUMBA_NUM_THREADS:
        raise InvalidParams(f"DUDLEY_THREADS must lie in 1..{numba.config.NUMBA_NUM_THREADS}")
    numba.set_num_threads(n)


class Result:
    """What a command produced: a table, a report and optional figures."""

    def __init__(self, header, rows, report: dict, figures=None, ok: bool = True):
        self.header = list(header)
        self.rows = [list(r) for r in rows]
        self.report = report
        self.figures = figures or []
        self.ok = ok


def _slot_names(d):
    from .graded import slot_names
    return slot_names(d)


# -- commands -----------------------------------------------------------------

def cmd_simulate(cfg) -> Result:
    from .diffusion import DiffusionConfig, dudley_project, simulate_batch
    d = cfg.d
    dc = DiffusionConfig(d=d, sigma=cfg.sigma, h=cfg.h, T=cfg.T, R=cfg.R, scheme=cfg.scheme,
                         record_every=cfg.record_every)
    gcols = [f"g{i}{j}" for i in range(d + 1) for j in range(d + 1)]
    xcols = [f"xi{i}" for i in range(d + 1)]
    header = ["path", "t", *gcols, *xcols, *_slot_names(d)]
    rows = []
    exits = []
    xs, ys = [], []
    for k, p in enumerate(simulate_batch(dc, cfg.seed, cfg.paths, cfg.s)):
        _, xi = dudley_project(p)
        for r in range(len(p.times)):
            g = p.matrices[r, : d + 1, : d + 1].reshape(-1)
            rows.append([k, float(p.times[r]), *g, *xi[r], *p.rel[r]])
        exits.append(math.inf if p.exit_time is None else p.exit_time)
        if k < 20:
            xs.append(xi[:, 1])
            ys.append(xi[:, 0])
    ex = np.array(exits)
    report = {"paths": cfg.paths, "steps": dc.n_steps, "exited": int(np.isfinite(ex).sum()),
              "mean_exit_time": float(ex[np.isfinite(ex)].mean()) if np.isfinite(ex).any() else None}
    figs = [("paths", lambda path: _plot().paths_figure(None, xs, ys, path,
                                                        title="xi projection, first paths"))]
    return Result(header, rows, report, figs)


def _plot():
    from . import plotting
    return plotting


def cmd_tangent(cfg) -> Result:
    from .driver import iter_chunks
    from .tangent import batch_tangent
    d = cfg.d
    names = _slot_names(d)
    rows = []
    first = None
    k0 = 0
    for b in iter_chunks(cfg.seed, cfg.T, cfg.h, d, cfg.paths, cfg.s):
        U = batch_tangent(b, cfg.sigma)
        if first is None:
            first = U[: min(20, len(U))]
        n = U.shape[1]
        idx = list(range(cfg.record_every - 1, n, cfg.record_every))
        if n - 1 not in idx:
            idx.append(n - 1)
        for p in range(len(U)):
            rows.append([k0 + p, 0.0, *np.zeros(len(names))])
            for k in idx:
                rows.append([k0 + p, (k + 1) * cfg.h, *U[p, k]])
        k0 += len(U)
    report = {"paths": cfg.paths, "steps": int(first.shape[1]) if first is not None else 0}
    figs = [("area", lambda path: _plot().paths_figure(
        None, [u[:, 0] for u in first], [u[:, d + 1] for u in first], path,
        xlabel=names[0], ylabel=names[d + 1], title="tangent process"))]
    return Result(["path", "t", *names], rows, report, figs)


def _probe_array(cfg) -> np.ndarray:
    d = cfg.d
    if cfg.get("probe_file"):
        return C.load_probes(cfg.probe_file, d)
    if cfg.get("probes"):
        return np.array(cfg.probes, dtype=float)
    p = np.zeros(2 * d + 1 + d * (d - 1) // 2)
    p[d] = 0.09  # u0 axis at homogeneous norm 0.3
    return p[None]


def cmd_green(cfg) -> Result:
    from .graded import angular, graded_dimension, hnorm
    from .green import green_estimate
    from .tangent import phi_estimate
    d = cfg.d
    P = _probe_array(cfg)
    rows_g = green_estimate(None, P, cfg.R, cfg.paths, cfg.h, cfg.seed, d, cfg.widths,
                            cfg.s, cfg.sigma, cfg.scheme)
    r = np.atleast_1d(hnorm(P, d))
    th = angular(P, d)
    phis = phi_estimate(th, cfg.paths, cfg.seed, d, cfg.widths, cfg.h, cfg.s, cfg.sigma,
                        stream=1)
    Q = graded_dimension(d)
    rows = []
    for k, (g, ph) in enumerate(zip(rows_g, phis)):
        rows.append([k, *P[k], float(r[k]), g.G, g.stderr, g.upper, g.hits,
                     ph.phi * r[k] ** (2 - Q), ph.stderr * r[k] ** (2 - Q), bool(g.inside)])
    header = ["probe", *_slot_names(d), "hnorm", "G", "stderr", "upper", "hits",
              "tangent_G", "tangent_stderr", "inside"]
    report = {"probes": len(P), "R": cfg.R}
    gi, ti = header.index("G"), header.index("tangent_G")
    figs = [("green", lambda path: _plot().series_figure(
        list(range(len(rows))), {"G": [x[gi] for x in rows], "tangent": [x[ti] for x in rows]},
        path, xlabel="probe", ylabel="density", logy=True))]
    return Result(header, rows, report, figs)


def cmd_scaling(cfg) -> Result:
    from .tangent import scaling_trials
    rows = []
    reps = []
    for eps in cfg.eps:
        for t in cfg.t:
            r = scaling_trials(eps, t, cfg.paths, cfg.trials, cfg.seed, cfg.d, s=cfg.s)
            reps.append({"eps": eps, "t": t, **r})
            for nm, f in r["pass_fraction"].items():
                rows.append([eps, t, nm, f, r["u0_exact"]])
    names = [r[2] for r in rows]
    figs = [("passfrac", lambda path: _plot().bar_figure(
        [f"{r[2]} e={r[0]:g}" for r in rows], [r[3] for r in rows], path,
        ylabel="pass fraction", hline=0.95))] if names else []
    return Result(["eps", "t", "coord", "pass_fraction", "u0_exact"], rows, {"runs": reps}, figs)


def _unit_probe(cfg) -> np.ndarray:
    from .graded import angular
    d = cfg.d
    if cfg.get("probes") and not cfg.get("probe_axis"):
        return angular(np.array(cfg.probes[0], dtype=float), d)
    th = np.zeros(2 * d + 1 + d * (d - 1) // 2)
    th[d] = 1.0
    return th


def cmd_theorem1(cfg) -> Result:
    from .green import theorem1_check
    th = _unit_probe(cfg)
    res = theorem1_check(th, cfg.eps, cfg.paths, cfg.seed, cfg.d, cfg.R, cfg.h, cfg.widths,
                         cfg.s, cfg.sigma, cfg.scheme, cfg.replications)
    rows = []
    for rep in res["replications"]:
        for rg in rep["rungs"]:
            rows.append([rep["stream"], rg["eps"], rg["S"], rg["stderr"], rep["phi"],
                         rep["phi_stderr"], rg["abs_diff"], rg["combined_se"], rg["paired_se"]])
    r0 = res["replications"][0]
    figs = [("theorem1", lambda path: _plot().series_figure(
        [g["eps"] for g in r0["rungs"]], {"S(eps)": [g["S"] for g in r0["rungs"]]}, path,
        xlabel="eps", ylabel="eps^(Q-2) G", logx=True,
        errors={"S(eps)": [g["stderr"] for g in r0["rungs"]]}, hline=r0["phi"]))]
    header = ["replication", "eps", "S", "S_stderr", "phi", "phi_stderr", "abs_diff",
              "combined_se", "paired_se"]
    return Result(header, rows, res, figs)


def cmd_cone(cfg) -> Result:
    from .graded import axial_cone
    from .green import cone_hit
    cone = axial_cone(cfg.d, cfg.c, past=cfg.past)
    rows_d = cone_hit(cone, cfg.t, cfg.paths, [cfg.h], cfg.seed, cfg.s, cfg.sigma, cfg.scheme)
    rows = [[r["h"], r["t"], r["p_hat"], r["stderr"], r["N"]] for r in rows_d]
    figs = [("cone", lambda path: _plot().series_figure(
        [r[1] for r in rows], {"P(T<=t)": [r[2] for r in rows]}, path, xlabel="t",
        ylabel="hitting probability", errors={"P(T<=t)": [r[3] for r in rows]}))]
    return Result(["h", "t", "p_hat", "stderr", "N"], rows, {"cone": cone.name, "rows": rows_d}, figs)


def _capacity_rows(cfg):
    from .graded import axial_cone
    from .green import SliceSpec, slice_capacity
    sl = SliceSpec(axial_cone(cfg.d, cfg.c), cfg.lam, *cfg.slices)
    return slice_capacity(sl, cfg.paths, cfg.seed, cfg.R, cfg.h, cfg.cells, cfg.max_sources,
                          cfg.s, cfg.sigma, cfg.scheme)


def cmd_capacity(cfg) -> Result:
    from .graded import graded_dimension
    Q = graded_dimension(cfg.d)
    caps = _capacity_rows(cfg)
    rows = []
    for r in caps:
        ref = cfg.lam ** (r["n"] * (Q - 2))
        rows.append([r["n"], r.get("eps", math.nan), r["capacity"], r["stderr"],
                     r["capacity"] / ref, r["cloud"], r["sources"]])
    figs = [("capacity", lambda path: _plot().series_figure(
        [r[0] for r in rows], {"C(B_n)": [r[2] for r in rows],
                               "lam^(n(Q-2))": [cfg.lam ** (r[0] * (Q - 2)) * rows[0][4]
                                                for r in rows]},
        path, xlabel="n", ylabel="capacity", logy=True))]
    header = ["n", "eps", "capacity", "stderr", "capacity_over_lam_power", "cloud", "sources"]
    return Result(header, rows, {"slices": caps}, figs)


def cmd_wiener(cfg) -> Result:
    from .graded import graded_dimension
    from .green import wiener_sum
    Q = graded_dimension(cfg.d)
    if cfg.get("input"):
        header, data = dio.read_csv(cfg.input)
        try:
            ni, ci = header.index("n"), header.index("capacity")
        except ValueError:
            raise InvalidParams(f"--input: {cfg.input} lacks n/capacity columns") from None
        ns = [int(r[ni]) for r in data]
        caps = [float(r[ci]) for r in data]
    else:
        rows = _capacity_rows(cfg)
        ns = [r["n"] for r in rows]
        caps = [r["capacity"] for r in rows]
    res = wiener_sum(ns, caps, cfg.lam, Q, cfg.weight)
    rows = [[n, c, t, s] for n, c, t, s in zip(ns, caps, res["terms"], res["partial_sums"])]
    figs = [("wiener", lambda path: _plot().series_figure(
        ns, {"partial sum": res["partial_sums"]}, path, xlabel="n", ylabel="partial sum",
        title=f"{cfg.weight} weight: {res['verdict']}"))]
    return Result(["n", "capacity", "term", "partial_sum"], rows, res, figs)


def cmd_bch(cfg) -> Result:
    from .graded import alpha_numeric, bch_alpha_beta, random_elements
    d = cfg.d
    rng = np.random.default_rng(cfg.seed)
    u = random_elements(rng, cfg.pairs, d)
    v = random_elements(rng, cfg.pairs, d)
    alpha, _ = bch_alpha_beta(u, v, d)
    num = alpha_numeric(u, v, d, cfg.eps)
    rel = np.abs(num["extrapolated"] / alpha - 1) if "extrapolated" in num else np.abs(
        num["alpha"][-1] / alpha - 1)
    rows = []
    for k in range(cfg.pairs):
        rows.append([k, float(alpha[k]), *num["alpha"][:, k],
                     float(num.get("extrapolated", num["alpha"][-1])[k]), float(rel[k])])
    header = ["pair", "alpha", *[f"alpha_eps_{e:g}" for e in cfg.eps], "extrapolated", "rel_error"]
    report = {"pairs": cfg.pairs, "ladder": list(cfg.eps), "max_rel_error": float(rel.max()),
              "median_rel_error": float(np.median(rel))}
    figs = [("bch", lambda path: _plot().series_figure(
        list(cfg.eps), {"max rel error": [float(np.max(np.abs(a / alpha - 1))) for a in num["alpha"]]},
        path, xlabel="eps", ylabel="relative error", logx=True, logy=True))]
    return Result(header, rows, report, figs)


def cmd_selftest(cfg) -> Result:
    from . import selftest
    ok, checks, _ = selftest.run(cfg.suites, cfg.seed, log=None)
    rows = [[c.suite, c.name, c.value, c.limit, c.passed] for c in checks]
    for c in checks:
        print(c.line())
    return Result(["suite", "check", "value", "limit", "passed"], rows,
                  {"passed": ok, "checks": len(checks)}, ok=ok)


COMMAND_FUNCS = {"simulate": cmd_simulate, "tangent": cmd_tangent, "green": cmd_green,
                 "scaling-test": cmd_scaling, "theorem1": cmd_theorem1, "cone": cmd_cone,
                 "capacity": cmd_capacity, "wiener": cmd_wiener, "bch-check": cmd_bch,
                 "selftest": cmd_selftest}


def write_outputs(cfg: C.ExperimentConfig, res: Result) -> list[Path]:
    path = _out_path(cfg)
    digest = dio.config_digest(cfg.digest_fields())
    if cfg.format == "csv":
        dio.write_csv(path, res.header, res.rows, cfg.seed, digest)
    else:
        payload = dict(res.report)
        payload["table"] = {"header": res.header, "rows": res.rows}
        dio.write_json(path, payload, cfg.seed, digest, cfg.digest_fields())
    written = [path]
    if cfg.get("plot", False):
        for tag, draw in res.figures:
            written.append(draw(path.with_name(f"{path.stem}_{tag}.png")))
    return written


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    t0 = time.perf_counter()
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config")}
    try:
        _set_threads()
        cfg = C.config_load(ns.config, ns.command, flags)
        res = COMMAND_FUNCS[ns.command](cfg)
        written = write_outputs(cfg, res)
    except NumericalGuard as exc:
        print(f"dudley {ns.command}: numerical guard: {exc}", file=sys.stderr)
        return 3
    except DudleyError as exc:
        print(f"dudley {ns.command}: error: {exc}", file=sys.stderr)
        return 2
    elapsed = time.perf_counter() - t0
    print(f"dudley {ns.command}: seed={cfg.seed} elapsed={elapsed:.2f}s "
          f"digest={dio.config_digest(cfg.digest_fields())} out={written[0]}"
          + ("" if res.ok else " FAILED"))
    return 0 if res.ok else 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
