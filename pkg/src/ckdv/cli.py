"""Command-line runner: ``ckdv <experiment> [--config FILE] [--out DIR] ...``.

Every run writes ``manifest.json`` (resolved config, versions, wall time),
``config.toml`` (the resolved config, enough to re-run), ``series.csv`` and
``summary.json`` into its output directory, plus optional field dumps and
SVG plots.

Exit status: 0 success, 1 configuration error, 2 numerical fault,
3 failed check in ``--assert`` mode.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .config import (EXPERIMENTS, get_key, is_scalar, load_config, parse_scalar, set_key,
                     write_config)
from .diagnostics import (ConservationObserver, RefinementConfig, ProbeConfig, analyticity_fit,
                          bilinear_probe, boundary_mass_fraction, conserved, refinement_study,
                          windowed_sobolev)
from .dynamics import State, integrate, integrate_original, picard_iterate
from .errors import ConfigError, IntegrationFault, InvalidCoefficientsError
from .fieldio import write_fields
from .model import OriginalCoefficients, reduce, validate
from .operators import (SpaceTimeBlock, bk_expansion, coefficient_sum, commutator_residual,
                        dilation_residual, leibniz_direct)
from .rough_data import (dirac_approx, from_file, gaussian, pv_reciprocal, soliton)
from .series import DiagnosticsSeries
from .spectral import Field, SpectralGrid, sobolev_norm, to_spectral

log = logging.getLogger("ckdv")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_ASSERT = 0, 1, 2, 3


class RunFault(Exception):
    """Numerical failure after partial results were produced."""

    def __init__(self, message, summary, series=None):
        super().__init__(message)
        self.summary = summary
        self.series = series


# -- shared helpers -----------------------------------------------------------------

def coefficients_from(cfg) -> OriginalCoefficients:
    oc = OriginalCoefficients(**cfg["system"])
    problems = validate(oc)
    if problems:
        raise ConfigError("system", "invalid coefficients: " + ", ".join(problems))
    return oc


def build_initial(cfg, grid: SpectralGrid) -> tuple[Field, Field]:
    """Initial pair ``(w_u * profile_u, w_v * profile_v)`` from the data section."""
    d = cfg["data"]
    wu, wv = (float(w) for w in d["weights"])
    kind = d["kind"]
    try:
        if kind == "zero":
            pu = pv = Field.zeros(grid)
        elif kind == "soliton+gaussian":
            pu = soliton(grid, d["kappa"], d["x0"], 6.0)
            pv = gaussian(grid, 1.0, d["width"], d["x0"])
        elif kind == "soliton":
            pu = pv = soliton(grid, d["kappa"], d["x0"], 6.0)
        elif kind == "gaussian":
            pu = pv = gaussian(grid, 1.0, d["width"], d["x0"])
        elif kind == "dirac":
            pu = pv = dirac_approx(grid, d["eps"], d["delta"])
        elif kind == "pv":
            pu = pv = pv_reciprocal(grid, d["eps"])
        else:
            u, v = from_file(d["path"], "u"), from_file(d["path"], "v")
            if u.grid != grid:
                raise ConfigError("data.path", f"file grid {u.grid} differs from configured {grid}")
            return wu * u, wv * v
    except (ValueError, OSError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError("data", str(exc)) from None
    return wu * pu, wv * pv


def write_table(path, rows, columns=None):
    """CSV of a list of dicts; floats written with repr for exact round-trips."""
    if columns is None:
        columns = list(rows[0]) if rows else []

    def fmt(v):
        if isinstance(v, float):
            return repr(v)
        return str(v)

    lines = [",".join(columns)]
    lines += [",".join(fmt(r.get(c, "")) for c in columns) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data):
    Path(path).write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


# -- experiments -------------------------------------------------------------------
# Each returns (summary dict, series, checks) where series is a DiagnosticsSeries
# or a list of row dicts, and checks maps check names to booleans.

def run_simulate(cfg, out: Path, seed: int):
    oc = coefficients_from(cfg)
    grid = SpectralGrid(cfg["grid"]["N"], cfg["grid"]["L"])
    u0, v0 = build_initial(cfg, grid)
    t = cfg["time"]
    obs = ConservationObserver(oc)
    extra = {}

    def norms(state):
        extra.setdefault("l2_u", []).append(sobolev_norm(state.u, 0))
        extra.setdefault("l2_v", []).append(sobolev_norm(state.v, 0))
        extra.setdefault("boundary_mass_u", []).append(boundary_mass_fraction(state.u))

    fault = None
    try:
        traj = integrate_original(u0, v0, oc, t["T"], t["dt"], [obs, norms], stride=t["stride"])
        final = traj.final
    except IntegrationFault as exc:
        fault = exc
        final = None
    raw = obs.series()
    channels = dict(raw.channels)
    for name in list(raw.names):
        q = raw[name]
        if q.size:
            channels[f"drift_{name}"] = np.abs(q - q[0]) / max(abs(q[0]), 1e-14)
    channels.update(extra)
    series = DiagnosticsSeries(raw.times, channels)
    drift = {n: series.max(f"drift_{n}") for n in raw.names}
    summary = {
        "status": "fault" if fault else "ok",
        "final_time": float(series.times[-1]) if len(series) else 0.0,
        "max_drift": drift,
        "max_boundary_mass_u": series.max("boundary_mass_u") if len(series) else 0.0,
    }
    checks = {
        "E1_drift": max(drift.get("E1u", 0), drift.get("E1v", 0)) <= 1e-8,
        "E3_drift": drift.get("E3", 0) <= 1e-8,
        "E4_drift": drift.get("E4", 0) <= 1e-6,
    }
    if fault:
        summary["fault_time"] = fault.time
        raise RunFault(str(fault), summary, series)
    if cfg["output"]["dumps"]:
        write_fields(out / "initial.bin", u0, v0, 0.0)
        write_fields(out / "final.bin", final.u, final.v, final.t)
    if cfg["output"]["plots"]:
        from .plots import plot_fields, plot_series, plot_spectrum
        plot_fields(out / "fields.svg", grid, [("t=0", u0.values, v0.values),
                                               (f"t={final.t:g}", final.u.values, final.v.values)])
        plot_spectrum(out / "spectrum.svg", grid, [("u", final.u), ("v", final.v)])
        plot_series(out / "drift.svg", series, [f"drift_{n}" for n in raw.names],
                    ylabel="relative drift")
    return summary, series, checks


def run_picard(cfg, out: Path, seed: int):
    oc = coefficients_from(cfg)
    rc, _ = reduce(oc)
    grid = SpectralGrid(cfg["grid"]["N"], cfg["grid"]["L"])
    u0, v0 = build_initial(cfg, grid)
    p = cfg["experiment"]["params"]
    t_list = sorted(float(x) for x in p.get("T_list", [0.025, 0.05, 0.1, 0.2]))
    iterations = int(p.get("iterations", 30))
    s = float(p.get("s", 0.0))
    compare_t = float(p.get("compare_T", 0.1))
    rows = []
    for T in t_list:
        _, rep = picard_iterate(u0, v0, T, iterations, rc, s=s)
        rows.append({"T": T, "contraction_ratio": rep.contraction_ratio(),
                     "first_ratio": rep.ratios[0] if rep.ratios else 0.0,
                     "iterations": rep.iterations, "converged": rep.converged,
                     "status": "diverged" if rep.diverged else "ok"})
    traj, rep = picard_iterate(u0, v0, compare_t, iterations, rc, s=s)
    dt = min(cfg["time"]["dt"], compare_t)
    try:
        ref = integrate(State(u0, v0), compare_t, dt, rc, stride=10**9).final
    except IntegrationFault as exc:
        raise RunFault(str(exc), {"status": "fault", "rows": rows}, rows) from None
    fin = traj.final
    h1 = sobolev_norm(fin.u - ref.u, 1) + sobolev_norm(fin.v - ref.v, 1)
    ratios = [r["contraction_ratio"] for r in rows]
    decreasing = all(a < b for a, b in zip(ratios, ratios[1:]))
    successive = rep.significant_ratios(2)
    summary = {"status": "ok", "rows": rows, "compare_T": compare_t, "h1_vs_etdrk4": h1,
               "distances": rep.distances, "successive_ratios": successive,
               "ratio_decreases_with_T": decreasing}
    checks = {"ratios_below_one": bool(successive) and max(successive) < 1,
              "agreement_h1": h1 <= 1e-6, "monotone_in_T": decreasing}
    return summary, rows, checks


def run_diagnose(cfg, out: Path, seed: int):
    oc = coefficients_from(cfg)
    grid = SpectralGrid(cfg["grid"]["N"], cfg["grid"]["L"])
    u, v = build_initial(cfg, grid)
    p = cfg["experiment"]["params"]
    cons = conserved(State(u, v), oc)
    summary = {"status": "ok", "conserved": cons._asdict(),
               "sobolev": {f"H{s}_{n}": sobolev_norm(f, s) for s in (0, 1, 2)
                           for n, f in (("u", u), ("v", v))}}
    center = float(p.get("center", 0.0))
    half_width = float(p.get("half_width", grid.L / 4))
    k = int(p.get("k", 2))
    summary["windowed"] = {"center": center, "half_width": half_width, "k": k,
                           "u": windowed_sobolev(u, center, half_width, k),
                           "v": windowed_sobolev(v, center, half_width, k)}
    for name, f in (("u", u), ("v", v)):
        try:
            summary[f"fit_{name}"] = analyticity_fit(f, p.get("band")).as_dict()
        except ValueError as exc:
            summary[f"fit_{name}"] = {"error": str(exc)}
    series = DiagnosticsSeries([0.0], {**{k_: [v_] for k_, v_ in cons._asdict().items()},
                                       **{k_: [v_] for k_, v_ in summary["sobolev"].items()}})
    order = np.argsort(grid.xi)
    write_table(out / "spectrum.csv",
                [{"xi": float(grid.xi[i]), "abs_u": float(abs(u.coeffs[i])),
                  "abs_v": float(abs(v.coeffs[i]))} for i in order])
    if cfg["output"]["plots"]:
        from .plots import plot_spectrum
        plot_spectrum(out / "spectrum.svg", grid, [("u", u), ("v", v)])
    return summary, series, {}


def operator_suite(N: int = 256, L: float = 40.0) -> tuple[list, list]:
    """Residuals of the operator identities on analytic test blocks."""
    grid = SpectralGrid(N, L)

    def f(x, t):
        return np.exp(-x**2) * np.exp(-t**2)

    results, conv_rows = [], []
    prev = None
    for h in (0.1, 0.05):
        block = SpaceTimeBlock.sample(grid, np.linspace(-3, 3, int(round(6 / h)) + 1), f)
        res = {w: commutator_residual(w, block) for w in ("LP", "LJ", "P3dx3")}
        conv_rows.append({"dt": h, **res})
        if prev is not None:
            for w in ("LP", "LJ"):
                order = math.log2(prev[w] / res[w])
                results.append({"identity": w, "residual": res[w], "tolerance": 1e-6,
                                "order": order, "pass": res[w] <= 1e-6 and order >= 6})
            results.append({"identity": "P3dx3", "residual": res["P3dx3"], "tolerance": 1e-6,
                            "pass": res["P3dx3"] <= 1e-6})
        prev = res
    rcr, _ = reduce(OriginalCoefficients(1.0, 0.5, 0.3, 1.2, 0.9))
    times = 0.5 + 0.05 * np.arange(-12, 13)
    block = SpaceTimeBlock.sample(grid, times, lambda x, t: np.exp(-x**2) * (1 + t))
    # P^j u for the separable test u = g(x) h(t): binomial sum of (x d_x)^i g (3t d_t)^(j-i) h
    pu = _separable_powers(grid, 0.5, 2)
    for k in (0, 1, 2):
        direct = leibniz_direct(block, rcr, k)
        expanded = bk_expansion(pu, pu, rcr, k)[0]
        err = float(np.linalg.norm(direct.coeffs - expanded.coeffs)
                    / max(np.linalg.norm(direct.coeffs), 1e-300))
        results.append({"identity": f"leibniz_k{k}", "residual": err, "tolerance": 1e-6,
                        "pass": err <= 1e-6})
    ok = all(coefficient_sum(k) == 4**k for k in range(11))
    results.append({"identity": "multinomial_sum_4^k", "residual": 0.0 if ok else 1.0,
                    "tolerance": 0.0, "pass": ok})
    return results, conv_rows


def _separable_powers(grid, t, jmax):
    from math import comb
    from numpy.polynomial import polynomial as P
    x = grid.x
    polys = [np.array([1.0])]
    for _ in range(jmax):
        p = polys[-1]
        polys.append(P.polysub(P.polymulx(P.polyder(p)), 2 * P.polymulx(P.polymulx(p))))
    out = []
    for j in range(jmax + 1):
        total = np.zeros_like(x)
        for i in range(j + 1):
            m = j - i
            h = (1 + t) if m == 0 else 3**m * t
            total += comb(j, i) * P.polyval(x, polys[i]) * np.exp(-x**2) * h
        out.append(to_spectral(total, grid))
    return out


def run_operator_check(cfg, out: Path, seed: int):
    p = cfg["experiment"]["params"]
    results, conv_rows = operator_suite(int(p.get("N", 256)), float(p.get("L", 40.0)))
    # dilation identity against the PDE residual on a short computed run
    oc = coefficients_from(cfg)
    rc, _ = reduce(oc)
    grid = SpectralGrid(cfg["grid"]["N"], cfg["grid"]["L"])
    u0, v0 = build_initial(cfg, grid)
    dt = cfg["time"]["dt"]
    try:
        traj = integrate(State(u0, v0), 10 * dt, dt, rc)
    except IntegrationFault as exc:
        raise RunFault(str(exc), {"status": "fault", "identities": results}) from None
    from .dynamics import pde_residual
    pde = pde_residual(traj, rc)
    dil = dilation_residual(traj, rc)
    gap = max(float(np.max(np.abs(dil[c] - np.abs(pde.times) * pde[c])))
              for c in ("residual_u", "residual_v"))
    results.append({"identity": "dilation_vs_t_pde", "residual": gap, "tolerance": 1e-10,
                    "pass": gap <= 1e-10})
    summary = {"status": "ok", "identities": results}
    checks = {r["identity"]: bool(r["pass"]) for r in results}
    return summary, conv_rows, checks


def run_bilinear(cfg, out: Path, seed: int):
    p = cfg["experiment"]["params"]
    pc = ProbeConfig(grid_sizes=tuple(int(n) for n in p.get("grid_sizes", (64, 128, 256))))
    try:
        stats = bilinear_probe(float(p.get("s", -0.5)), float(p.get("b", 0.52)),
                               float(p.get("b_prime", 0.56)), int(p.get("trials", 100)),
                               seed=seed, config=pc)
    except ValueError as exc:
        raise ConfigError("experiment.params", str(exc)) from None
    rows = [{"N": n, **v} for n, v in stats["per_N"].items()]
    checks = {"finite": stats["finite"], "stable_within_2": stats["stability"] <= 2.0}
    return {"status": "ok", **stats}, rows, checks


def run_refine(cfg, out: Path, seed: int):
    p = cfg["experiment"]["params"]
    rcfg = RefinementConfig(coefficients=coefficients_from(cfg))
    for key in ("N", "L", "dt", "x_probe", "half_width", "k", "amplitude", "kind"):
        if key in p:
            setattr(rcfg, key, type(getattr(rcfg, key))(p[key]))
    if "absorber" in p:
        rcfg.absorber = p["absorber"] or None
    eps_list = [float(e) for e in p.get("eps_list", [0.4, 0.2, 0.1, 0.05])]
    t_probe = float(p.get("t_probe", 0.5))
    try:
        rows = refinement_study(eps_list, t_probe, rcfg)
    except ValueError as exc:
        raise ConfigError("experiment.params", str(exc)) from None
    faults = [r for r in rows if r["status"] != "ok"]
    ratios_t0 = [r["ratio_t0"] for r in rows[1:]]
    ratios_probe = [r["ratio_probe"] for r in rows[1:]]
    checks = {
        "t0_diverges": bool(ratios_t0) and min(ratios_t0) >= 2.0,
        "probe_bounded": len(ratios_probe) >= 2
        and all(0.8 <= r <= 1.25 for r in ratios_probe[-2:]),
    }
    summary = {"status": "fault" if faults else "ok", "t_probe": t_probe,
               "config": rcfg.as_dict(), "rows": rows}
    if faults:
        raise RunFault("refinement run failed", summary, rows)
    return summary, rows, checks


RUNNERS = {
    "simulate": run_simulate,
    "picard": run_picard,
    "diagnose": run_diagnose,
    "operator-check": run_operator_check,
    "bilinear-probe": run_bilinear,
    "refine": run_refine,
}


def _write_series(out: Path, series):
    if isinstance(series, DiagnosticsSeries):
        series.to_csv(out / "series.csv")
    elif series:
        write_table(out / "series.csv", series)
    else:
        (out / "series.csv").write_text("")


def run(cfg: dict, out: Path, seed: int = 0, check: bool = False, argv=None) -> int:
    """Execute the configured experiment into ``out``; returns the exit status."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    name = cfg["experiment"]["name"]
    start = time.perf_counter()
    status, checks, summary, series = EXIT_OK, {}, {}, None
    try:
        summary, series, checks = RUNNERS[name](cfg, out, seed)
    except RunFault as exc:
        summary, series, status = exc.summary, exc.series, EXIT_NUMERICAL
        summary.setdefault("error", str(exc))
    except (IntegrationFault, FloatingPointError, InvalidCoefficientsError) as exc:
        summary, status = {"status": "fault", "error": str(exc)}, EXIT_NUMERICAL
    summary["checks"] = checks
    if status == EXIT_OK and check and not all(checks.values()):
        status = EXIT_ASSERT
    _write_series(out, series)
    write_json(out / "summary.json", summary)
    write_config(cfg, out / "config.toml")
    manifest = {
        "experiment": name,
        "seed": seed,
        "config": cfg,
        "versions": {"ckdv": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
        "argv": list(argv) if argv is not None else None,
        "wall_time_s": time.perf_counter() - start,
        "exit_status": status,
        "files": sorted(p.name for p in out.iterdir()) + ["manifest.json"],
    }
    write_json(out / "manifest.json", manifest)
    return status


def _sweep_cell(args):
    cfg, out, seed, check = args
    try:
        code = run(cfg, out, seed, check)
    except Exception as exc:  # isolate anything unexpected to this cell
        log.error("sweep cell %s crashed: %s", out, exc)
        return EXIT_NUMERICAL, {"status": "fault", "error": str(exc)}
    summary = json.loads((Path(out) / "summary.json").read_text())
    return code, summary


def sweep(cfg: dict, axis: str, values, out: Path, seed: int = 0, check: bool = False,
          workers: int | None = None) -> tuple[int, list]:
    """Run the configured experiment once per value of ``axis``; cells are independent."""
    current = get_key(cfg, axis)
    if not is_scalar(current):
        raise ConfigError(axis, "sweep axis must name a scalar key")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cells = []
    for i, value in enumerate(values):
        cell_cfg = set_key(cfg, axis, value)
        cells.append((cell_cfg, out / f"cell_{i:02d}", seed, check))
    workers = workers or min(len(cells), os.cpu_count() or 1)
    if workers > 1 and len(cells) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_cell, cells))
    else:
        results = [_sweep_cell(c) for c in cells]
    rows = []
    for value, (code, summary) in zip(values, results):
        row = {"value": value, "exit_status": code,
               "status": "fault" if code == EXIT_NUMERICAL else summary.get("status", "ok")}
        for k, v in summary.items():
            if isinstance(v, (int, float, str, bool)) and k not in row:
                row[k] = v
        rows.append(row)
    columns = []
    for r in rows:
        columns += [c for c in r if c not in columns]
    write_table(out / "sweep.csv", rows, columns)
    write_json(out / "summary.json", {"axis": axis, "cells": rows})
    worst = max((c for c, _ in results), default=EXIT_OK)
    return worst, rows


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ckdv", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS + ("sweep",):
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="TOML run configuration")
        sp.add_argument("--out", type=Path, help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--quiet", action="store_true")
        sp.add_argument("--assert", dest="check", action="store_true",
                        help="exit 3 if any acceptance check fails")
        if name == "sweep":
            sp.add_argument("--axis", required=True, help="dotted config key, e.g. data.eps")
            sp.add_argument("--values", required=True, help="comma-separated values")
            sp.add_argument("--workers", type=int, default=None)
    return parser


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = {} if args.command == "sweep" else {"experiment": {"name": args.command}}
        cfg = load_config(args.config, overrides)
        out = args.out or Path(cfg["output"]["dir"] or f"runs/{cfg['experiment']['name']}")
        cfg["output"]["dir"] = str(out)
        if args.command == "sweep":
            values = [parse_scalar(v.strip()) for v in args.values.split(",") if v.strip()]
            status, rows = sweep(cfg, args.axis, values, out, args.seed, args.check,
                                 args.workers)
            if not args.quiet:
                for r in rows:
                    print(f"{args.axis}={r['value']}: {r['status']}")
            return status
        status = run(cfg, out, args.seed, args.check, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not args.quiet:
        summary = json.loads((out / "summary.json").read_text())
        for k, ok in summary.get("checks", {}).items():
            print(f"{'PASS' if ok else 'FAIL'} {k}")
        print(f"wrote {out} (status {status})")
    return status


if __name__ == "__main__":
    sys.exit(main())
