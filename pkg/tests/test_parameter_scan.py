import json

import numpy as np
import pytest

from specflow.demos import torus_chart
from specflow.errors import MaskedBasepoint, SeamMismatch
from specflow.functional_family import registry
from specflow.operator_core import SignCompactOperator
from specflow.parameter_scan import (
    DisjointSet,
    EdgeSfl,
    FamilyField,
    ParameterChart,
    SeamWitness,
    components_and_labels,
    degeneracy_map,
    edge_sfl_labels,
    scan_family,
)

from conftest import inertia

KRAS = ParameterChart([(0.5, 4.5)], [65])


def test_chart_validation():
    with pytest.raises(ValueError):
        ParameterChart([(0, 1)], [7])
    with pytest.raises(ValueError):
        ParameterChart([(0, 1)] * 4, [8] * 4)
    with pytest.raises(ValueError):
        ParameterChart([(1, 0)], [8])


def test_chart_geometry():
    c = ParameterChart([(0, 1), (0, 2)], [8, 9], (True, False))
    assert c.step(0) == 1 / 8 and c.step(1) == 2 / 8
    assert c.shift((7, 0), 0, 1) == (0, 0)
    assert c.shift((0, 8), 1, 1) is None
    assert c.nearest_node([0.51, 1.0]) == (4, 4)
    assert sorted(c.neighbors((0, 0))) == [(0, 1), (1, 0), (7, 0)]


def test_degeneracy_map_krasnoselskii():
    margin, kd = degeneracy_map(registry("krasnoselskii"), KRAS)
    lam = KRAS.axis_values(0)
    dips = sorted(float(lam[i]) for i in np.flatnonzero(kd))
    assert dips == [1.0, 2.0, 3.0, 4.0]
    # oracle: smallest |1 - lam/k|
    oracle = np.min(np.abs(1 - lam[:, None] / np.array([1, 2, 3, 4])[None, :]), axis=1)
    assert np.allclose(margin, oracle, atol=1e-15)


def test_degeneracy_map_positive_definite_and_torus():
    m, kd = degeneracy_map(registry("positive_definite"), ParameterChart([(-2, 2)], [33]))
    assert kd.sum() == 0 and m.min() >= 1
    m, kd = degeneracy_map(registry("torus_demo"), torus_chart(16))
    rows = {i for i, _ in zip(*np.nonzero(kd))}
    assert rows == {8}  # theta_1 = 1/2


def test_edge_sfl_examples():
    F = registry("krasnoselskii")
    chart = ParameterChart([(0.5, 4.5)], [64])  # no node lands on an integer
    f = FamilyField(F, chart)
    edges = edge_sfl_labels(f).edges()
    lam = chart.axis_values(0)
    for (a, axis), v in edges.items():
        lo, hi = lam[a[0]], lam[a[0] + 1]
        crossings = sum(lo < k < hi for k in (1, 2, 3, 4))
        assert v == -crossings
        assert v == inertia(np.diag(1 - lo / np.arange(1, 5))) - inertia(np.diag(1 - hi / np.arange(1, 5)))
    T = FamilyField(registry("torus_demo"), torus_chart(16))
    e = edge_sfl_labels(T).values
    assert e[((7, 3), 0, 2)] == -1  # straddles the degenerate row theta_1 = 1/2 upwards


def test_crossings_method_matches_endpoint():
    chart = ParameterChart([(0.5, 4.5)], [64])
    a = edge_sfl_labels(FamilyField(registry("krasnoselskii"), chart, method="endpoint")).values
    b = edge_sfl_labels(FamilyField(registry("krasnoselskii"), chart, method="crossings")).values
    assert a == b


def test_krasnoselskii_scan():
    res = scan_family(registry("krasnoselskii"), KRAS, (0,))
    lam = KRAS.axis_values(0)
    assert sorted(float(lam[i]) for i in np.flatnonzero(res.bif_mask)) == [1.0, 2.0, 3.0, 4.0]
    assert res.stats["n_components"] == 5
    assert sorted(res.component_index.values()) == [-4, -3, -2, -1, 0]
    assert res.stats["dim_proxy_ok"] and not res.stats["interior_points"]
    conf = scan_family(registry("krasnoselskii"), KRAS, (0,), mode="confirm")
    assert np.array_equal(conf.bif_mask, res.bif_mask)


def test_empty_mask_single_component():
    res = scan_family(registry("positive_definite"), ParameterChart([(-2, 2)], [16]), (0,))
    assert not res.bif_mask.any()
    assert res.stats["n_components"] == 1 and res.component_index == {0: 0}
    assert not res.stats["disconnects_chart"]


def test_torus_scan():
    res = scan_family(registry("torus_demo"), torus_chart(32), (0, 0))
    rows = set(np.nonzero(res.bif_mask)[0])
    assert rows == {16} and res.bif_mask[16].all()
    assert res.stats["n_components"] == 1
    assert res.stats["label_defect"] == 1
    assert res.stats["label_inconsistencies"] >= 1
    assert res.stats["loop_defects"] == {"0": -1, "1": 0}


def test_seam_mismatch_without_witness():
    chart = ParameterChart([(0, 1), (0, 1)], [8, 8], (True, True))
    with pytest.raises(SeamMismatch):
        FamilyField(registry("torus_demo"), chart)


def test_seam_witness_json_and_conjugation():
    w = SeamWitness(("+", (1, 1)))
    assert SeamWitness.from_json(json.loads(json.dumps(w.to_json()))) == w
    top = SignCompactOperator.from_window([1.0, -1.0], np.diag([-1.0, -1.0]), True, True)
    bottom = SignCompactOperator.from_window([1.0, -1.0], np.diag([1.0, -1.0]), True, True)
    assert np.allclose(w.apply(top), bottom.window_matrix())
    assert w.check(bottom, top) <= 1e-12


def _plane_scan(res_n, basepoint):
    F = registry("compact_perturbation", dim=2)
    chart = ParameterChart([(-3.0, 1.0), (-3.0, 1.0)], [res_n, res_n])
    return chart, scan_family(F, chart, basepoint)


def test_plane_labels_are_morse_differences():
    chart, res = _plane_scan(16, (15, 15))
    assert res.stats["n_components"] == 4
    assert res.stats["components_with_mixed_labels"] == []
    assert res.stats["label_inconsistencies"] == 0
    for idx in chart.nodes():
        if res.labeled[idx]:
            k = chart.point(idx)
            mu = inertia(np.diag(1 + k))
            assert res.labels[idx] == 0 - mu
    # a different basepoint (different spanning tree) shifts every label by a constant
    _, res2 = _plane_scan(16, (0, 0))
    sel = res.labeled & res2.labeled
    assert len(set((res.labels - res2.labels)[sel])) == 1


def test_plane_mask_inside_dilated_degeneracy():
    chart, res = _plane_scan(16, (15, 15))
    for idx in zip(*np.nonzero(res.bif_mask)):
        k = chart.point(idx)
        assert np.min(np.abs(1 + k)) <= max(chart.step(0), chart.step(1))


def test_refinement_does_not_lose_labels():
    _, coarse = _plane_scan(16, (15, 15))
    _, fine = _plane_scan(32, (31, 31))
    assert len(fine.stats["distinct_labels"]) >= len(coarse.stats["distinct_labels"])


def test_three_axis_scan():
    F = registry("compact_perturbation", dim=3)
    chart = ParameterChart([(-2.0, 0.5)] * 3, [8, 8, 8])
    res = scan_family(F, chart, (7, 7, 7))
    assert res.stats["distinct_labels"] == [-3, -2, -1, 0]
    assert res.stats["n_components"] == 8


def test_components_report_flags():
    chart = ParameterChart([(0, 1), (0, 1)], [8, 8])
    mask = np.zeros((8, 8), bool)
    mask[3:5, 3:5] = True
    rep = components_and_labels(chart, mask, EdgeSfl(), (0, 0)).report
    assert rep["interior_points"] is True
    assert rep["n_components"] == 1
    mask = np.zeros((8, 8), bool)
    mask[2, 2] = True
    rep = components_and_labels(chart, mask, EdgeSfl(), (0, 0)).report
    assert rep["isolated_mask_cells"] == 1 and rep["dim_proxy_ok"] is False
    mask = np.zeros((8, 8), bool)
    mask[:, 4] = True
    rep = components_and_labels(chart, mask, EdgeSfl(), (0, 0)).report
    assert rep["n_components"] == 2 and rep["disconnected_subwindows"]
    with pytest.raises(MaskedBasepoint):
        components_and_labels(chart, mask, EdgeSfl(), (0, 4))


def test_disjoint_set():
    d = DisjointSet(5)
    d.union(0, 1)
    d.union(3, 4)
    d.union(1, 4)
    assert d.find(0) == d.find(3) and d.find(2) != d.find(0)
