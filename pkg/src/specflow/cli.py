"""Command line entry point: ``specflow {demo,sfl,scan,geodesic}``.

Exit codes: 0 success, 1 configuration error, 2 a built-in expectation
failed, 3 unresolved spectral-flow crossing.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import demos
from .errors import SpecflowError, UnresolvedCrossing
from .functional_family import registry
from .geodesics import BRANCHES, geodesic_family_scan, geodesic_shoot, geometry, spectral_index
from .operator_core import DEFAULT_GAP
from .output import atomic_write, write_json, write_scan
from .parameter_scan import ParameterChart, SeamWitness, scan_family
from .spectral_flow import path_from_json, sfl_crossings, sfl_endpoint

EXIT_OK, EXIT_CONFIG, EXIT_MISMATCH, EXIT_UNRESOLVED = 0, 1, 2, 3


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument errors are configuration errors (exit 1), not argparse's 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _common(parser, defaults: bool):
    d = (lambda v: v) if defaults else (lambda v: argparse.SUPPRESS)
    parser.add_argument("--out", default=d("out"), help="output directory (default: ./out)")
    parser.add_argument("--seed", type=int, default=d(0), help="seed for randomised steps")
    parser.add_argument("--threads", type=int, default=d(1), help="worker threads for scans")
    parser.add_argument("--gap", type=float, default=d(DEFAULT_GAP),
                        help="invertibility gap for eigenvalues (default 1e-8)")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="specflow", description=__doc__.splitlines()[0])
    _common(p, True)
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("demo", help="run a built-in demonstration")
    d.add_argument("name", choices=demos.DEMOS)
    d.add_argument("--resolution", type=int, help="chart nodes per axis (scan demos)")
    d.add_argument("--mesh", type=int, nargs="+", help="FEM meshes (split-spheres)")
    _common(d, False)

    s = sub.add_parser("sfl", help="spectral flow of a sampled operator path")
    s.add_argument("--path", required=True, help="path JSON file")
    s.add_argument("--n-init", type=int, default=32)
    _common(s, False)

    c = sub.add_parser("scan", help="parameter scan from a JSON config")
    c.add_argument("--config", required=True)
    _common(c, False)

    g = sub.add_parser("geodesic", help="shoot one geodesic and compute its index")
    g.add_argument("--config", required=True)
    _common(g, False)
    return p


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def cmd_demo(args) -> int:
    out = Path(args.out)
    kw = {"gap": args.gap, "seed": args.seed, "threads": args.threads}
    if args.resolution is not None:
        if args.resolution < 8:
            raise ConfigError("--resolution must be at least 8")
        kw["resolution"] = args.resolution
    if args.mesh:
        if min(args.mesh) < 16:
            raise ConfigError("--mesh values must be at least 16")
        kw["meshes"] = tuple(args.mesh)
    report = demos.RUNNERS[args.name](out, **kw)
    write_json(out / "report.json", report)
    for c in report["checks"]:
        print(f"{'PASS' if c['pass'] else 'FAIL'}  {c['name']}: expected {c['expected']}, got {c['observed']}")
    return EXIT_OK if report["pass"] else EXIT_MISMATCH


def cmd_sfl(args) -> int:
    out = Path(args.out)
    obj = _load_json(args.path)
    try:
        path = path_from_json(obj, gap=args.gap)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad path file: {exc}") from exc
    try:
        res = sfl_crossings(path, n_init=args.n_init, gap=args.gap)
    except UnresolvedCrossing as exc:
        write_json(out / "sfl.json", {"error": "unresolved_crossing", "message": str(exc),
                                      "interval": list(exc.interval)})
        print(f"unresolved crossing in {exc.interval}", file=sys.stderr)
        return EXIT_UNRESOLVED
    endpoint = sfl_endpoint(path, args.gap).value
    report = res.to_json()
    report["endpoint_value"] = endpoint
    report["methods_agree"] = endpoint == res.value
    write_json(out / "sfl.json", report)
    print(res.value)
    return EXIT_OK if report["methods_agree"] else EXIT_MISMATCH


def _chart_from_config(cfg, F_dim):
    try:
        bounds = cfg["bounds"]
        res = cfg["resolution"]
        res = [res] * len(bounds) if isinstance(res, int) else res
        identify = cfg.get("identify", [False] * len(bounds))
        wit = cfg.get("seam_witness")
        wit = [None if w is None else SeamWitness.from_json(w) for w in wit] if wit else ()
        chart = ParameterChart(bounds, res, identify, wit)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"scan config needs bounds / resolution: {exc}") from exc
    if F_dim is not None and F_dim != chart.ndim:
        raise ConfigError(f"family has {F_dim} parameters but the chart has {chart.ndim} axes")
    return chart


def cmd_scan(args) -> int:
    out = Path(args.out)
    cfg = _load_json(args.config)
    fam = cfg.get("family")
    mode = cfg.get("mode", "fast")
    if mode not in ("fast", "confirm"):
        raise ConfigError(f"mode must be 'fast' or 'confirm', got {mode!r}")
    if isinstance(fam, str) and fam in BRANCHES:
        kw = {}
        if "resolution" in cfg:
            r = cfg["resolution"]
            r = [r, r] if isinstance(r, int) else r
            kw = {"n_radius": r[0], "n_angle": r[1]} if fam == "sphere-tm" else \
                 {"n_c": r[0], "n_len": r[1]} if fam == "ellipsoid" else {"n": r[0]}
        spec = BRANCHES[fam](**kw)
        bp = cfg.get("basepoint")
        bp = spec.chart.nearest_node(bp) if bp is not None else None
        result = geodesic_family_scan(spec, basepoint=bp, mode=mode, mesh_n=cfg.get("mesh"),
                                      gap=args.gap, threads=args.threads)
    else:
        if isinstance(fam, dict):
            F = registry(fam["name"], **fam.get("kwargs", {}))
        elif isinstance(fam, str):
            F = registry(fam)
        else:
            raise ConfigError("scan config needs a 'family'")
        chart = _chart_from_config(cfg, F.param_dim)
        bp = cfg.get("basepoint", [b[0] for b in chart.bounds])
        result = scan_family(F, chart, chart.nearest_node(bp), mode=mode, gap=args.gap,
                             method=cfg.get("sfl_method", "endpoint"))
    write_scan(out, result)
    print(f"components={result.stats['n_components']} masked={int(result.bif_mask.sum())}")
    return EXIT_OK


def cmd_geodesic(args) -> int:
    out = Path(args.out)
    cfg = _load_json(args.config)
    try:
        M = geometry(cfg["geometry"])
        lam = cfg.get("lambda")
        p, v = np.asarray(cfg["p"], dtype=float), np.asarray(cfg["v"], dtype=float)
        mesh = int(cfg.get("mesh", 200))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"geodesic config needs geometry / p / v: {exc}") from exc
    if p.shape != (M.manifold_dim,) or v.shape != (M.manifold_dim,):
        raise ConfigError(f"p and v must have {M.manifold_dim} components")
    if mesh < 16:
        raise ConfigError("mesh must be at least 16")
    rec = geodesic_shoot(M, lam, p, v)
    try:
        ir = spectral_index(rec, M, lam, mesh, gap=args.gap, check_refinement=True)
    except UnresolvedCrossing as exc:
        write_json(out / "index.json", {"error": "unresolved_crossing", "message": str(exc),
                                        "interval": list(exc.interval)})
        return EXIT_UNRESOLVED
    atomic_write(out / "geodesic.csv", rec.to_csv())
    body = ir.to_json()
    body.update({"geometry": cfg["geometry"], "energy_drift": rec.energy_drift,
                 "signature": [int(e) for e in rec.eps]})
    write_json(out / "index.json", body)
    print(f"spectral_index={ir.spectral_index} degenerate={ir.degenerate}")
    return EXIT_OK


COMMANDS = {"demo": cmd_demo, "sfl": cmd_sfl, "scan": cmd_scan, "geodesic": cmd_geodesic}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: --help (0) or a usage error (1)
        return int(exc.code or 0)
    if args.threads < 1:
        print("--threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if not args.gap > 0:
        print("--gap must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except UnresolvedCrossing as exc:
        print(f"unresolved crossing: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED
    except (ConfigError, SpecflowError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
