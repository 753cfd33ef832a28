import json
import math

import numpy as np
import pytest

from specflow.cli import main
from specflow.operator_core import SymmetricMatrix
from specflow.spectral_flow import krasnoselskii_path, path_to_json, reverse


def run(*argv):
    return main([str(a) for a in argv])


def write(path, obj):
    path.write_text(json.dumps(obj))
    return path


def test_demo_krasnoselskii(tmp_path):
    assert run("demo", "krasnoselskii", "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["pass"] is True
    assert rep["mu_rel_end_start"] == list(range(1, 9))
    assert rep["sfl_crossings"] == rep["sfl_endpoint"] == [-n for n in range(1, 9)]
    assert [round(p, 3) for p in rep["bifurcation_points"]] == [1, 2, 3, 4]
    for name in ("degeneracy.csv", "mask.csv", "components.csv", "scan.svg", "scan_report.json"):
        assert (tmp_path / name).exists()


def test_demo_torus_small(tmp_path):
    assert run("--out", tmp_path, "demo", "torus", "--resolution", 16) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["components"] == 1 and rep["label_defect"] == 1 and rep["mask_is_circle"]


def test_demo_expectation_mismatch_exit_2(tmp_path):
    # 9 nodes on the wrapped axis: no node sits at theta_1 = 1/2
    assert run("demo", "torus", "--resolution", 9, "--out", tmp_path) == 2
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["pass"] is False


def test_config_errors_exit_1(tmp_path, capsys):
    assert run("demo", "nope", "--out", tmp_path) == 1
    assert run("demo", "torus", "--resolution", 4, "--out", tmp_path) == 1
    assert run("sfl", "--path", tmp_path / "missing.json", "--out", tmp_path) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("scan", "--config", bad, "--out", tmp_path) == 1
    cfg = write(tmp_path / "c.json", {"family": "krasnoselskii", "bounds": [[0.5, 4.5]], "resolution": 3})
    assert run("scan", "--config", cfg, "--out", tmp_path) == 1
    cfg = write(tmp_path / "g.json", {"geometry": "round_sphere(1)", "p": [1.0], "v": [0, 1]})
    assert run("geodesic", "--config", cfg, "--out", tmp_path) == 1
    assert run("--gap", "-1", "demo", "torus", "--out", tmp_path) == 1


@pytest.mark.parametrize("n", [3])
def test_sfl_gamma_files(tmp_path, n):
    p = krasnoselskii_path(n)
    ts = [0.0, 0.5, 1.0]
    f = write(tmp_path / "g.json", path_to_json(p, ts))
    assert run("sfl", "--path", f, "--out", tmp_path / "fwd") == 0
    fwd = json.loads((tmp_path / "fwd" / "sfl.json").read_text())
    assert fwd["value"] == fwd["endpoint_value"] == -n and fwd["methods_agree"]
    f = write(tmp_path / "r.json", path_to_json(reverse(p), ts))
    assert run("sfl", "--path", f, "--out", tmp_path / "rev") == 0
    assert json.loads((tmp_path / "rev" / "sfl.json").read_text())["value"] == n
    const = {"kind": "dense", "interpolation": "linear",
             "samples": [{"t": t, "operator": SymmetricMatrix(np.diag([1.0, -2.0])).to_json()} for t in (0.0, 1.0)]}
    f = write(tmp_path / "c.json", const)
    assert run("sfl", "--path", f, "--out", tmp_path / "const") == 0
    assert json.loads((tmp_path / "const" / "sfl.json").read_text())["value"] == 0


def test_sfl_unresolved_exit_3(tmp_path):
    ops = [[[1.0]], [[0.0]], [[0.0]], [[-1.0]]]
    obj = {"kind": "dense", "interpolation": "linear",
           "samples": [{"t": t, "operator": {"dim": 1, "entries": o}} for t, o in zip((0, 0.4, 0.6, 1), ops)]}
    f = write(tmp_path / "deg.json", obj)
    assert run("sfl", "--path", f, "--out", tmp_path) == 3
    rep = json.loads((tmp_path / "sfl.json").read_text())
    a, b = rep["interval"]
    assert rep["error"] == "unresolved_crossing" and 0.35 <= a <= b <= 0.65


def test_scan_registry_family(tmp_path):
    cfg = write(tmp_path / "s.json", {"family": "krasnoselskii", "bounds": [[0.5, 4.5]], "resolution": 65,
                                      "basepoint": [0.5]})
    assert run("scan", "--config", cfg, "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["n_components"] == 5 and rep["distinct_labels"] == [-4, -3, -2, -1, 0]
    mask = (tmp_path / "mask.csv").read_text().splitlines()
    assert mask[0] == "i0,x0,mask" and sum(int(r.split(",")[-1]) for r in mask[1:]) == 4


def test_scan_empty_mask_single_component_svg(tmp_path):
    cfg = write(tmp_path / "s.json", {"family": "positive_definite", "bounds": [[-1, 1]], "resolution": 16})
    assert run("scan", "--config", cfg, "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["n_components"] == 1
    svg = (tmp_path / "scan.svg").read_text()
    assert "#d62728" not in svg.split("legend")[0] or rep["masked_cells"] == 0


def test_scan_torus_with_seam_witness(tmp_path):
    cfg = write(tmp_path / "t.json", {"family": "torus_demo", "bounds": [[0, 1], [0, 1]], "resolution": 16,
                                      "identify": [True, True], "seam_witness": [["+", [1, 1]], None],
                                      "basepoint": [0, 0]})
    assert run("scan", "--config", cfg, "--out", tmp_path) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["n_components"] == 1 and rep["label_defect"] == 1


def test_scan_ellipsoid_branch(tmp_path):
    cfg = write(tmp_path / "e.json", {"family": "ellipsoid", "resolution": 16, "mesh": 48})
    assert run("scan", "--config", cfg, "--out", tmp_path) == 0
    rows = [r.split(",") for r in (tmp_path / "mask.csv").read_text().splitlines()[1:]]
    dc, dL = 1.5 / 15, 6.5 / 15
    masked = [(float(c), float(L)) for _, _, c, L, m in rows if m == "1"]
    assert masked
    for c, L in masked:
        # the curve must cross the cell box around the node
        assert any(k * math.pi * (c - dc) - dL <= L <= k * math.pi * (c + dc) + dL for k in range(1, 6))


def test_geodesic_config(tmp_path):
    cfg = write(tmp_path / "g.json", {"geometry": "round_sphere(1.0)", "lambda": [1.0],
                                      "p": [math.pi / 2, 0.0], "v": [0.0, 4.0], "mesh": 64})
    assert run("geodesic", "--config", cfg, "--out", tmp_path) == 0
    idx = json.loads((tmp_path / "index.json").read_text())
    assert idx["spectral_index"] == 1 and idx["morse_index"] == 1 and idx["mesh_stable"]
    assert abs(idx["conjugate_instants"][0]["t"] - math.pi / 4) < 1e-6
    lines = (tmp_path / "geodesic.csv").read_text().splitlines()
    assert lines[0] == "t,x0,x1,v0,v1" and len(lines) == 1026


def test_repeat_runs_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("demo", "krasnoselskii", "--out", tmp_path / d) == 0
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
