"""Command line driver.

    wintgen-kit {check|invariants|gaussmap|construct}
                [--chart FILE | --catalog NAME | --seed FILE]
                [--grid N,N,...] [--h H] [--tol T] [--out DIR] [--rng-seed S]

Exit codes: 0 success, 1 inequality violation, 2 unreadable input,
3 umbilic-everywhere input, 4 degenerate seed.  WINTGEN_THREADS caps the
worker pool for per-point evaluation.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import catalog as catalog_mod
from . import report as report_mod
from .ddvv import evaluate_point, is_wintgen_ideal
from .envelope import (
    envelope_chart_to_dict,
    envelope_to_chart,
    fiber_sphericity,
    mean_curvature_sphere_residual,
    validate_isotropic,
    WeierstrassSeed,
    curve_from_weierstrass,
)
from .errors import (
    ChartFormatError,
    NotWintgenError,
    SeedDegeneracyError,
    SignatureError,
    UmbilicError,
    WintgenKitError,
)
from .gaussmap import harmonicity_certificate, rank_certificate, superconformality_certificate
from .jets import grid_points, load_chart
from .moebius import build_frame, integrability_residuals, wintgen_invariants

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_UMBILIC = 3
EXIT_DEGENERATE_SEED = 4


@dataclass
class RunConfig:
    command: str
    chart: Optional[str] = None
    catalog: Optional[str] = None
    seed: Optional[str] = None
    grid: Optional[list] = None
    h: float = 1e-3
    tol: float = 1e-7
    out: str = "wintgen-out"
    rng_seed: int = 0

    def __post_init__(self):
        if self.h <= 0 or self.tol <= 0:
            raise ChartFormatError("tolerances and steps must be positive")
        if self.grid is not None and any(n < 2 for n in self.grid):
            raise ChartFormatError("grid counts must be at least 2 per axis")

    def echo(self) -> dict:
        return {"command": self.command, "chart": self.chart,
                "catalog": self.catalog, "seed": self.seed,
                "grid": self.grid, "h": self.h, "tol": self.tol,
                "out": self.out, "rng_seed": self.rng_seed}


def _worker_map(fn, items):
    threads = int(os.environ.get("WINTGEN_THREADS", "1"))
    if threads <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _resolve_chart(cfg: RunConfig):
    if cfg.chart:
        return load_chart(cfg.chart), os.path.basename(cfg.chart)
    if cfg.catalog:
        entry = catalog_mod.get_entry(cfg.catalog)
        return entry.chart(), entry.name
    raise ChartFormatError("need --chart FILE or --catalog NAME")


def _chart_grid(chart, cfg: RunConfig, default_count: int,
                margin: float = 0.04):
    counts = cfg.grid if cfg.grid else [default_count] * chart.dim_m
    if len(counts) != chart.dim_m:
        raise ChartFormatError(
            f"--grid needs {chart.dim_m} counts for this chart")
    return grid_points(chart.domain, counts, margin=margin)


def cmd_check(cfg: RunConfig) -> int:
    chart, name = _resolve_chart(cfg)
    grid = _chart_grid(chart, cfg, default_count=5)

    def one(u):
        rep = evaluate_point(chart, u, c=1.0, fit=False, tol=cfg.tol)
        row = {"u": u, "K": rep.K, "H_sq": rep.H_sq, "K_N": rep.K_N,
               "c": rep.c, "deficit": rep.deficit, "rho_sq": rep.rho_sq,
               "umbilic": rep.umbilic,
               "wintgen": is_wintgen_ideal(rep, cfg.tol)}
        return row

    rows = _worker_map(one, grid)
    deficits = [r["deficit"] for r in rows]
    summary = {
        "points": len(rows),
        "min_deficit": min(deficits),
        "max_deficit": max(deficits),
        "wintgen_fraction": sum(r["wintgen"] for r in rows) / len(rows),
        "umbilic_count": sum(r["umbilic"] for r in rows),
    }
    report = report_mod.make_report("check", cfg.echo(), {
        "chart": {"name": name, "dim_m": chart.dim_m,
                  "codim_p": chart.codim_p},
        "points": rows, "summary": summary})
    report_mod.write_report(report, os.path.join(cfg.out, "report.json"))
    return EXIT_OK if summary["min_deficit"] >= -cfg.tol else EXIT_VIOLATION


def cmd_invariants(cfg: RunConfig) -> int:
    chart, name = _resolve_chart(cfg)
    grid = _chart_grid(chart, cfg, default_count=3,
                       margin=max(0.04, 4 * cfg.h))

    def one(u):
        row = {"u": u}
        try:
            fr = build_frame(chart, u)
        except UmbilicError as err:
            row["umbilic"] = True
            row["rho_sq"] = err.rho_sq
            return row
        row["umbilic"] = False
        row.update({
            "rho": fr.rho, "A": fr.A, "B": fr.B, "C": fr.C,
            "B_sq": fr.B_sq, "Phi_sq": fr.Phi_sq, "trace_A": fr.trace_A,
            "identities": {
                "trace_B_max": max(abs(float(np.trace(fr.B[r])))
                                   for r in range(fr.B.shape[0])),
                "B_sq_deviation": abs(fr.B_sq - 4.0),
            }})
        rep = evaluate_point(chart, u, tol=cfg.tol)
        if is_wintgen_ideal(rep, max(cfg.tol, 1e-6)):
            try:
                inv = wintgen_invariants(chart, u, h=cfg.h)
                row["wintgen_block"] = {
                    "U": inv.U, "V": inv.V, "L": inv.L,
                    "L_a": inv.L_a, "S_alpha": inv.S_alpha,
                    "T_alpha": inv.T_alpha, "F": inv.F, "G": inv.G,
                    "residuals": inv.residuals}
            except (NotWintgenError, WintgenKitError):
                pass
        return row

    rows = _worker_map(one, grid)
    if all(r.get("umbilic") for r in rows):
        report = report_mod.make_report("invariants", cfg.echo(), {
            "chart": {"name": name}, "points": rows,
            "error": "umbilic everywhere"})
        report_mod.write_report(report, os.path.join(cfg.out, "report.json"))
        return EXIT_UMBILIC

    interior = [r["u"] for r in rows if not r.get("umbilic")]
    conv = []
    u0 = np.asarray(interior[len(interior) // 2], dtype=float)
    res_h = integrability_residuals(chart, u0, h=cfg.h)
    res_h2 = integrability_residuals(chart, u0, h=cfg.h / 2)
    for key in ("equa1", "equa2", "equa3", "equa4", "equa5"):
        ratio = (res_h[key] / res_h2[key]) if res_h2[key] > 0 else None
        conv.append({"equation": key, "residual_h": res_h[key],
                     "residual_h_half": res_h2[key], "ratio": ratio})

    report = report_mod.make_report("invariants", cfg.echo(), {
        "chart": {"name": name, "dim_m": chart.dim_m,
                  "codim_p": chart.codim_p},
        "points": rows,
        "integrability": {"u": u0, "h": cfg.h, "table": conv}})
    report_mod.write_report(report, os.path.join(cfg.out, "report.json"))
    return EXIT_OK


def cmd_gaussmap(cfg: RunConfig) -> int:
    chart, name = _resolve_chart(cfg)
    grid = _chart_grid(chart, cfg, default_count=2,
                       margin=max(0.04, 4 * cfg.h))

    def one(u):
        row = {"u": u}
        try:
            sv = rank_certificate(chart, u, h=cfg.h)
            harm = harmonicity_certificate(chart, u, h=cfg.h, orders=1)
            sup = superconformality_certificate(chart, u, h=cfg.h, orders=1)
        except (NotWintgenError, UmbilicError) as err:
            row["skipped"] = str(err)
            return row
        row.update({
            "singular_values": sv,
            "rank_threshold": 10.0 * cfg.h,
            "rank": int(np.sum(sv > 10.0 * cfg.h)),
            "submersion_ratio": harm.submersion_ratio,
            "submersion_deviation": harm.submersion_deviation,
            "tension_norm": harm.tension_norm,
            "tension_order": harm.convergence_order,
            "circle_residual": sup.circle_residual,
            "circle_order": sup.convergence_order,
            "ellipse": sup.ellipse})
        return row

    rows = _worker_map(one, grid)
    report = report_mod.make_report("gaussmap", cfg.echo(), {
        "chart": {"name": name, "dim_m": chart.dim_m,
                  "codim_p": chart.codim_p},
        "points": rows})
    report_mod.write_report(report, os.path.join(cfg.out, "report.json"))
    return EXIT_OK


def _resolve_seed(cfg: RunConfig):
    if cfg.seed:
        try:
            with open(cfg.seed) as fh:
                doc = json.load(fh)
            seed = WeierstrassSeed(m=doc["m"], components=doc["components"],
                                   name=doc.get("name",
                                                os.path.basename(cfg.seed)))
        except (OSError, json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ChartFormatError(f"cannot read seed file: {exc}") from exc
        domain = doc.get("domain")
        if domain is None:
            domain = [[-0.7, 0.7], [-0.7, 0.7]] \
                + [[0.0, 2 * np.pi]] * (seed.m - 2)
        curve_domain = doc.get("curve_domain")
        return seed, curve_domain, np.asarray(domain, dtype=float)
    if cfg.catalog:
        entry = catalog_mod.get_entry(cfg.catalog)
        obj = entry.seed()
        return obj["seed"], None, obj["domain"]
    raise ChartFormatError("construct needs --seed FILE or a seed catalog name")


def cmd_construct(cfg: RunConfig) -> int:
    seed, curve_domain, domain = _resolve_seed(cfg)
    curve = curve_from_weierstrass(seed, domain=curve_domain)
    zgrid = [complex(x, y)
             for x in np.linspace(curve.domain[0, 0], curve.domain[0, 1], 5)
             for y in np.linspace(curve.domain[1, 0], curve.domain[1, 1], 5)]
    cert = validate_isotropic(curve, zgrid)
    if not cert.ok:
        raise SeedDegeneracyError("isotropy certificate failed",
                                  invariant="isotropy")
    chart = envelope_to_chart(curve, domain)

    counts = cfg.grid if cfg.grid else [8] * chart.dim_m
    if len(counts) != chart.dim_m:
        raise ChartFormatError(f"--grid needs {chart.dim_m} counts")

    rng = np.random.default_rng(cfg.rng_seed)
    lo, hi = chart.domain[:, 0], chart.domain[:, 1]
    sample_count = 50
    samples = [lo + (hi - lo) * (0.1 + 0.8 * rng.random(chart.dim_m))
               for _ in range(sample_count)]

    def one(u):
        rep = evaluate_point(chart, u, tol=cfg.tol)
        return {"u": u, "deficit": rep.deficit,
                "wintgen": is_wintgen_ideal(rep, max(cfg.tol, 1e-6))}

    rows = _worker_map(one, samples)
    fibers = []
    for frac in (0.3, 0.7):
        z = complex(lo[0] + frac * (hi[0] - lo[0]),
                    lo[1] + frac * (hi[1] - lo[1]))
        fit = fiber_sphericity(curve, z, fiber_samples=14)
        fibers.append({"z": [z.real, z.imag], "residual": fit["residual"],
                       "radius": fit["radius"], "rank": fit["rank"]})
    mcs = [mean_curvature_sphere_residual(chart, u, h=cfg.h)
           for u in samples[:5]]

    os.makedirs(cfg.out, exist_ok=True)
    chart_path = os.path.join(cfg.out, "envelope_chart.json")
    with open(chart_path, "w") as fh:
        json.dump(report_mod.jsonable(envelope_chart_to_dict(chart)), fh,
                  sort_keys=True, indent=1)
        fh.write("\n")

    mesh_paths = _export_meshes(chart, curve, counts, cfg.out)

    body = {
        "seed": seed.to_dict(),
        "isotropy": {"null": cert.null_residual,
                     "isotropy": cert.isotropy_residual,
                     "holomorphy": cert.holomorphy_residual,
                     "positivity_min": cert.positivity_min},
        "envelope": {"flagged_points": chart.flagged,
                     "regular": not chart.flagged},
        "verification": {
            "points": rows,
            "min_deficit": min(r["deficit"] for r in rows),
            "wintgen_fraction": sum(r["wintgen"] for r in rows) / len(rows),
            "fiber_sphericity": fibers,
            "fiber_residual_max": max(f["residual"] for f in fibers),
            "mcs_residuals": mcs,
            "mcs_residual_max": max(mcs),
        },
        "outputs": {"chart": chart_path, **mesh_paths},
    }
    report = report_mod.make_report("construct", cfg.echo(), body)
    report_mod.write_report(report, os.path.join(cfg.out, "report.json"))
    return EXIT_OK


def _export_meshes(chart, curve, counts, outdir):
    n1, n2 = counts[0], counts[1]
    lo, hi = chart.domain[:, 0], chart.domain[:, 1]
    mid = 0.5 * (lo + hi)
    us = np.linspace(lo[0], hi[0], n1)
    vs = np.linspace(lo[1], hi[1], n2)
    verts = []
    for x in us:
        for y in vs:
            q = mid.copy()
            q[0], q[1] = x, y
            verts.append(chart.value(q))
    verts = np.array(verts)
    faces = report_mod.grid_faces(n1, n2)
    slice_obj = os.path.join(outdir, "slice.obj")
    slice_ply = os.path.join(outdir, "slice.ply")
    report_mod.export_obj(slice_obj, verts, faces=faces)
    report_mod.export_ply(slice_ply, verts, faces=faces)

    circle_pts = []
    polylines = []
    edges = []
    nfib = max(counts[2], 8) if len(counts) > 2 else 16
    from .envelope import build_envelope
    for frac in (0.25, 0.5, 0.75):
        z = complex(lo[0] + frac * (hi[0] - lo[0]),
                    lo[1] + frac * (hi[1] - lo[1]))
        start = len(circle_pts)
        for s in build_envelope(curve, z, nfib):
            circle_pts.append(s.point)
        idx = list(range(start, len(circle_pts)))
        polylines.append(idx + [start])
        edges.extend([(idx[i], idx[(i + 1) % len(idx)])
                      for i in range(len(idx))])
    circle_pts = np.array(circle_pts)
    fib_obj = os.path.join(outdir, "fibers.obj")
    fib_ply = os.path.join(outdir, "fibers.ply")
    report_mod.export_obj(fib_obj, circle_pts, polylines=polylines)
    report_mod.export_ply(fib_ply, circle_pts, edges=edges)
    return {"slice_obj": slice_obj, "slice_ply": slice_ply,
            "fibers_obj": fib_obj, "fibers_ply": fib_ply}


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wintgen-kit",
                                 description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("command",
                    choices=["check", "invariants", "gaussmap", "construct"])
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--chart", help="chart JSON file")
    src.add_argument("--catalog", help="catalog entry name")
    src.add_argument("--seed", help="Weierstrass seed JSON file (construct)")
    ap.add_argument("--grid", help="per-axis sample counts, e.g. 6,6")
    ap.add_argument("--h", type=float, default=1e-3,
                    help="stencil step for derivative certificates")
    ap.add_argument("--tol", type=float, default=1e-7,
                    help="DDVV tolerance")
    ap.add_argument("--out", default="wintgen-out", help="output directory")
    ap.add_argument("--rng-seed", type=int, default=0, dest="rng_seed")
    ap.add_argument("--list-catalog", action="store_true",
                    help="print catalog entries and exit")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    if args.list_catalog:
        for name in catalog_mod.entry_names():
            print(name)
        return EXIT_OK
    grid = None
    if args.grid:
        try:
            grid = [int(x) for x in args.grid.split(",")]
        except ValueError:
            print("error: --grid wants comma-separated integers",
                  file=sys.stderr)
            return EXIT_INPUT
    try:
        cfg = RunConfig(command=args.command, chart=args.chart,
                        catalog=args.catalog, seed=args.seed, grid=grid,
                        h=args.h, tol=args.tol, out=args.out,
                        rng_seed=args.rng_seed)
        handler = {"check": cmd_check, "invariants": cmd_invariants,
                   "gaussmap": cmd_gaussmap, "construct": cmd_construct}
        return handler[cfg.command](cfg)
    except (ChartFormatError, FileNotFoundError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT
    except SeedDegeneracyError as err:
        print(f"degenerate seed: {err} (invariant: {err.invariant})",
              file=sys.stderr)
        return EXIT_DEGENERATE_SEED
    except SignatureError as err:
        print(f"degenerate construction: {err}", file=sys.stderr)
        return EXIT_DEGENERATE_SEED
    except WintgenKitError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    raise SystemExit(main())
