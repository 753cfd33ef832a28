"""Built-in demonstrations with their expected headline numbers.

Each demo writes its grid artifacts into ``outdir`` and returns a JSON-ready
report with a ``checks`` list (name, expected, observed, pass).  Nothing here
depends on wall-clock time, so repeated runs are byte-identical.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .functional_family import find_bifurcation_on_path, registry, segment
from .geodesics import (
    ellipsoid_spec,
    geodesic_family_scan,
    geodesic_shoot,
    spectral_index,
    sphere_tm_spec,
    split_spheres,
    split_spheres_branch,
)
from .operator_core import DEFAULT_GAP, relative_morse_index_sc
from .output import atomic_write, dumps, write_scan
from .parameter_scan import ParameterChart, SeamWitness, scan_family
from .spectral_flow import krasnoselskii_path, sfl_crossings, sfl_endpoint

DEMOS = ("krasnoselskii", "torus", "sphere-tm", "ellipsoid", "split-spheres")


def _check(name, expected, observed):
    ok = expected == observed
    return {"name": name, "expected": expected, "observed": observed, "pass": bool(ok)}


def _finish(report):
    report["pass"] = all(c["pass"] for c in report["checks"])
    return report


def krasnoselskii(outdir: Path, gap: float = DEFAULT_GAP, seed: int = 0, **_):
    """Spectral flow of ``t -> id + t K_n`` and the bifurcation points of the quartic family."""
    n_max = 8
    cross, endp, paper_order = [], [], []
    for n in range(1, n_max + 1):
        path = krasnoselskii_path(n, gap=gap)
        cross.append(sfl_crossings(path, gap=gap).value)
        endp.append(sfl_endpoint(path, gap).value)
        paper_order.append(relative_morse_index_sc(path(1.0), path(0.0), gap))
    F = registry("krasnoselskii")
    recs = find_bifurcation_on_path(F, segment([0.5], [4.5]), gap=gap, seed=seed)
    points = [round(r.lambda_star[0], 9) for r in recs if r.certified]
    chart = ParameterChart([(0.5, 4.5)], [65])
    scan = scan_family(F, chart, (0,), gap=gap)
    labels = sorted(v for v in scan.component_index.values() if v is not None)
    expected_sfl = [-n for n in range(1, n_max + 1)]
    report = {
        "demo": "krasnoselskii",
        "sfl_crossings": cross,
        "sfl_endpoint": endp,
        "mu_rel_end_start": paper_order,
        "bifurcation_points": points,
        "bifurcation_records": [r.to_json() for r in recs],
        "components": len(scan.component_index),
        "component_labels": labels,
        "checks": [
            _check("sfl_crossings(gamma_n) = mu(L0) - mu(L1) = -n", expected_sfl, cross),
            _check("sfl_endpoint(gamma_n) = -n", expected_sfl, endp),
            _check("mu_rel(id+K_n, id) = n", list(range(1, n_max + 1)), paper_order),
            _check("certified bifurcation points", [1.0, 2.0, 3.0, 4.0],
                   [round(p, 3) for p in points]),
            _check("components of the 1-D chart", 5, len(scan.component_index)),
            _check("component labels", [-4, -3, -2, -1, 0], labels),
        ],
    }
    write_scan(outdir, scan, report_name="scan_report.json")
    return _finish(report)


def torus_chart(resolution: int = 64) -> ParameterChart:
    witness = SeamWitness(("+", (1, 1)))
    return ParameterChart([(0.0, 1.0), (0.0, 1.0)], [resolution, resolution], (True, True),
                          (witness, None))


def torus(outdir: Path, gap: float = DEFAULT_GAP, resolution: int = 64, **_):
    F = registry("torus_demo")
    chart = torus_chart(resolution)
    scan = scan_family(F, chart, (0, 0), gap=gap)
    rows = sorted({int(i) for i in np.nonzero(scan.bif_mask)[0]})
    cols = sorted({int(j) for j in np.nonzero(scan.bif_mask)[1]})
    circle = len(rows) == 1 and cols == list(range(resolution))
    st = scan.stats
    report = {
        "demo": "torus",
        "components": st["n_components"],
        "loop_defects": st["loop_defects"],
        "label_defect": st["label_defect"],
        "mask_theta1": [float(chart.axis_values(0)[i]) for i in rows],
        "mask_is_circle": circle,
        "checks": [
            _check("components of T minus B(f)", 1, st["n_components"]),
            _check("loop label defect magnitude", 1, st["label_defect"]),
            _check("mask is one circle theta1 = const", True, circle),
            _check("mask circle at theta1 = 1/2", [0.5], [round(float(chart.axis_values(0)[i]), 9) for i in rows]),
        ],
    }
    write_scan(outdir, scan, report_name="scan_report.json")
    return _finish(report)


def _ring_distance(values, targets):
    return [min(abs(v - t) for t in targets) for v in values]


def sphere_tm(outdir: Path, gap: float = DEFAULT_GAP, resolution: int = 128, threads: int = 1, **_):
    spec = sphere_tm_spec(resolution, resolution)
    scan = geodesic_family_scan(spec, gap=gap, threads=threads)
    radii = spec.chart.axis_values(0)
    ring = sorted({int(i) for i in np.nonzero(scan.bif_mask)[0]})
    cell = spec.chart.step(0)
    dist = _ring_distance([radii[i] for i in ring], [k * math.pi for k in (1, 2, 3)])
    near = [sorted({k for k in (1, 2, 3) if abs(radii[i] - k * math.pi) <= cell}) for i in ring]
    indices = scan.extra["distinct_spectral_indices"]
    report = {
        "demo": "sphere-tm",
        "resolution": [resolution, resolution],
        "components": scan.stats["n_components"],
        "distinct_spectral_indices": indices,
        "component_sfl_labels": sorted(v for v in scan.component_index.values() if v is not None),
        "mask_radii": [float(radii[i]) for i in ring],
        "failed_nodes": int(scan.failed.sum()),
        "max_energy_drift": scan.extra["max_energy_drift"],
        "checks": [
            _check("distinct spectral indices", [0, 1, 2, 3], indices),
            _check("mask rings within one cell of k*pi", True, bool(ring) and max(dist) <= cell),
            _check("each ring k = 1, 2, 3 present", [1, 2, 3], sorted({k for n in near for k in n})),
        ],
    }
    write_scan(outdir, scan, report_name="scan_report.json")
    return _finish(report)


def near_curve(c, L, dc, dL, k) -> bool:
    """Does the curve ``L = k pi c`` meet the cell box around node ``(c, L)``?"""
    lo, hi = k * math.pi * (c - dc), k * math.pi * (c + dc)
    return lo - dL <= L <= hi + dL


def ellipsoid_checks(scan, spec):
    cs = spec.chart.axis_values(0)
    Ls = spec.chart.axis_values(1)
    dc, dL = spec.chart.step(0), spec.chart.step(1)
    L_max = spec.chart.bounds[1][1]
    ks = range(1, int(L_max / (math.pi * spec.chart.bounds[0][0])) + 2)
    far = 0
    for i, j in zip(*np.nonzero(scan.bif_mask)):
        if not any(near_curve(cs[i], Ls[j], dc, dL, k) for k in ks):
            far += 1
    jumps = sorted({abs(v) for v in scan.edge_sfl.values() if v != 0})
    # every curve L = k pi c with k = 1, 2 must be hit in each chart column it crosses
    missing = 0
    for i, c in enumerate(cs):
        for k in (1, 2):
            Lk = k * math.pi * c
            if Ls[0] + dL < Lk < Ls[-1] - dL:
                col = scan.bif_mask[i]
                if not any(col[j] and abs(Ls[j] - Lk) <= dL for j in range(len(Ls))):
                    missing += 1
    return far, jumps, missing


def ellipsoid(outdir: Path, gap: float = DEFAULT_GAP, resolution: int = 64, threads: int = 1, **_):
    spec = ellipsoid_spec(resolution, resolution)
    scan = geodesic_family_scan(spec, gap=gap, threads=threads)
    far, jumps, missing = ellipsoid_checks(scan, spec)
    report = {
        "demo": "ellipsoid",
        "resolution": [resolution, resolution],
        "components": scan.stats["n_components"],
        "distinct_spectral_indices": scan.extra["distinct_spectral_indices"],
        "mask_cells": int(scan.bif_mask.sum()),
        "mask_cells_off_curves": far,
        "edge_index_jumps": jumps,
        "checks": [
            _check("mask cells farther than one cell from some curve L = k pi c", 0, far),
            _check("curves k = 1, 2 masked in every column they cross", 0, missing),
            _check("label change across each curve", [1], jumps),
        ],
    }
    write_scan(outdir, scan, report_name="scan_report.json")
    return _finish(report)


def split_spheres_demo(outdir: Path, gap: float = DEFAULT_GAP, meshes=(200, 400), **_):
    M = split_spheres(1.0, 1.0, 1.0, 0.7)
    rows = []
    checks = []
    for L in (2.0, 4.0, 6.0):
        p, v = split_spheres_branch(M, L)
        rec = geodesic_shoot(M, None, p, v)
        expected = math.floor(L / math.pi) - math.floor(0.7 * L / math.pi)
        got = []
        for mesh in meshes:
            ir = spectral_index(rec, M, None, mesh, gap=gap)
            got.append(ir.spectral_index)
            rows.append({"length": L, "mesh": mesh, "index": ir.to_json()})
        checks.append(_check(f"spectral index at L={L:g} (meshes {list(meshes)})",
                             [expected] * len(meshes), got))
    report = {"demo": "split-spheres", "runs": rows, "checks": checks}
    atomic_write(Path(outdir) / "index.json", dumps(rows))
    return _finish(report)


RUNNERS = {
    "krasnoselskii": krasnoselskii,
    "torus": torus,
    "sphere-tm": sphere_tm,
    "ellipsoid": ellipsoid,
    "split-spheres": split_spheres_demo,
}
