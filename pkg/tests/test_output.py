import json
import os
import re

import numpy as np
import pytest

from specflow.output import COLOR_TABLE, atomic_write, dumps, grid_csv, svg_heatmap


def test_color_table_is_fixed():
    assert len(COLOR_TABLE) == 256 and len(set(COLOR_TABLE)) > 200
    assert all(re.fullmatch(r"#[0-9a-f]{6}", c) for c in COLOR_TABLE)
    assert COLOR_TABLE[0] == "#440154" and COLOR_TABLE[-1] == "#fde725"


def test_atomic_write_keeps_old_file_on_failure(tmp_path):
    target = tmp_path / "a.json"
    atomic_write(target, "old")

    class Boom:
        def __bytes__(self):
            raise RuntimeError("boom")

    with pytest.raises(RuntimeError):
        atomic_write(target, Boom())
    assert target.read_text() == "old"
    assert os.listdir(tmp_path) == ["a.json"]


def test_dumps_sorted_and_numpy_safe():
    text = dumps({"b": np.int64(2), "a": np.array([1.5, 2.0]), "c": (np.bool_(True),)})
    assert json.loads(text) == {"a": [1.5, 2.0], "b": 2, "c": [True]}
    assert text.index('"a"') < text.index('"b"')


def test_grid_csv_layout():
    text = grid_csv(np.array([[True, False], [False, True]]), [np.array([0.0, 1.0]), np.array([2.0, 3.0])], "mask")
    lines = text.splitlines()
    assert lines[0] == "i0,i1,x0,x1,mask"
    assert lines[1] == "0,0,0.0,2.0,1"
    assert lines[2] == "0,1,0.0,3.0,0"
    assert len(lines) == 5


def test_svg_deterministic_and_marks_mask():
    vals = np.linspace(0.01, 1, 64).reshape(8, 8)
    mask = np.zeros((8, 8), bool)
    mask[3] = True
    comps = np.where(mask, -1, 0)
    a = svg_heatmap(vals, mask, comps, {0: 0}, "t")
    b = svg_heatmap(vals.copy(), mask.copy(), comps.copy(), {0: 0}, "t")
    assert a == b
    assert a.startswith("<svg") and a.count("#d62728") >= 8
    one_d = svg_heatmap(np.linspace(0.1, 1, 10), np.zeros(10, bool))
    assert "<svg" in one_d
