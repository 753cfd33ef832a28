"""Deterministic artifact writers: atomic files, node-grid CSV and SVG heatmaps."""

from __future__ import annotations

import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

# 256-entry perceptual colour ramp (dark purple -> yellow), fixed so that
# heatmaps are byte-stable across machines and library versions.
COLOR_TABLE = (
    '#440154', '#440256', '#450457', '#450559', '#46075a', '#46085c', '#460a5d', '#460b5e',
    '#470d60', '#470e61', '#471063', '#471164', '#471365', '#481467', '#481668', '#481769',
    '#48186a', '#481a6c', '#481b6d', '#481c6e', '#481d6f', '#481f70', '#482071', '#482173',
    '#482374', '#482475', '#482576', '#482677', '#482878', '#482979', '#472a7a', '#472c7a',
    '#472d7b', '#472e7c', '#472f7d', '#46307e', '#46327e', '#46337f', '#463480', '#453581',
    '#453781', '#453882', '#443983', '#443a83', '#443b84', '#433d84', '#433e85', '#423f85',
    '#424086', '#424186', '#414287', '#414487', '#404588', '#404688', '#3f4788', '#3f4889',
    '#3e4989', '#3e4a89', '#3e4c8a', '#3d4d8a', '#3d4e8a', '#3c4f8a', '#3c508b', '#3b518b',
    '#3b528b', '#3a538b', '#3a548c', '#39558c', '#39568c', '#38588c', '#38598c', '#375a8c',
    '#375b8d', '#365c8d', '#365d8d', '#355e8d', '#355f8d', '#34608d', '#34618d', '#33628d',
    '#33638d', '#32648e', '#32658e', '#31668e', '#31678e', '#31688e', '#30698e', '#306a8e',
    '#2f6b8e', '#2f6c8e', '#2e6d8e', '#2e6e8e', '#2e6f8e', '#2d708e', '#2d718e', '#2c718e',
    '#2c728e', '#2c738e', '#2b748e', '#2b758e', '#2a768e', '#2a778e', '#2a788e', '#29798e',
    '#297a8e', '#297b8e', '#287c8e', '#287d8e', '#277e8e', '#277f8e', '#27808e', '#26818e',
    '#26828e', '#26828e', '#25838e', '#25848e', '#25858e', '#24868e', '#24878e', '#23888e',
    '#23898e', '#238a8d', '#228b8d', '#228c8d', '#228d8d', '#218e8d', '#218f8d', '#21908d',
    '#21918c', '#20928c', '#20928c', '#20938c', '#1f948c', '#1f958b', '#1f968b', '#1f978b',
    '#1f988b', '#1f998a', '#1f9a8a', '#1e9b8a', '#1e9c89', '#1e9d89', '#1f9e89', '#1f9f88',
    '#1fa088', '#1fa188', '#1fa187', '#1fa287', '#20a386', '#20a486', '#21a585', '#21a685',
    '#22a785', '#22a884', '#23a983', '#24aa83', '#25ab82', '#25ac82', '#26ad81', '#27ad81',
    '#28ae80', '#29af7f', '#2ab07f', '#2cb17e', '#2db27d', '#2eb37c', '#2fb47c', '#31b57b',
    '#32b67a', '#34b679', '#35b779', '#37b878', '#38b977', '#3aba76', '#3bbb75', '#3dbc74',
    '#3fbc73', '#40bd72', '#42be71', '#44bf70', '#46c06f', '#48c16e', '#4ac16d', '#4cc26c',
    '#4ec36b', '#50c46a', '#52c569', '#54c568', '#56c667', '#58c765', '#5ac864', '#5cc863',
    '#5ec962', '#60ca60', '#63cb5f', '#65cb5e', '#67cc5c', '#69cd5b', '#6ccd5a', '#6ece58',
    '#70cf57', '#73d056', '#75d054', '#77d153', '#7ad151', '#7cd250', '#7fd34e', '#81d34d',
    '#84d44b', '#86d549', '#89d548', '#8bd646', '#8ed645', '#90d743', '#93d741', '#95d840',
    '#98d83e', '#9bd93c', '#9dd93b', '#a0da39', '#a2da37', '#a5db36', '#a8db34', '#aadc32',
    '#addc30', '#b0dd2f', '#b2dd2d', '#b5de2b', '#b8de29', '#bade28', '#bddf26', '#c0df25',
    '#c2df23', '#c5e021', '#c8e020', '#cae11f', '#cde11d', '#d0e11c', '#d2e21b', '#d5e21a',
    '#d8e219', '#dae319', '#dde318', '#dfe318', '#e2e418', '#e5e419', '#e7e419', '#eae51a',
    '#ece51b', '#efe51c', '#f1e51d', '#f4e61e', '#f6e620', '#f8e621', '#fbe723', '#fde725',
)
MASK_COLOR = "#d62728"
NAN_COLOR = "#bdbdbd"


def atomic_write(path, data) -> Path:
    """Write text or bytes to ``path`` through a temp file and ``os.replace``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    raw = data.encode("utf-8") if isinstance(data, str) else bytes(data)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(raw)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n"


def write_json(path, obj) -> Path:
    return atomic_write(path, dumps(obj))


def grid_csv(grid: np.ndarray, axes, name: str = "value") -> str:
    """Row-major node listing: ``i0,...,x0,...,value`` with one header line."""
    grid = np.asarray(grid)
    d = grid.ndim
    head = [f"i{a}" for a in range(d)] + [f"x{a}" for a in range(d)] + [name]
    lines = [",".join(head)]
    for idx in np.ndindex(grid.shape):
        coords = [repr(float(axes[a][idx[a]])) for a in range(d)]
        v = grid[idx]
        if grid.dtype == bool:
            val = str(int(v))
        elif np.issubdtype(grid.dtype, np.integer):
            val = str(int(v))
        else:
            val = repr(float(v)) if np.isfinite(v) else "nan"
        lines.append(",".join([*map(str, idx), *coords, val]))
    return "\n".join(lines) + "\n"


def _color(x: float) -> str:
    if not np.isfinite(x):
        return NAN_COLOR
    return COLOR_TABLE[int(min(255, max(0, round(x * 255))))]


def svg_heatmap(values: np.ndarray, mask=None, components=None, labels=None,
                title: str = "", axes=None, cell: int = 6) -> str:
    """Heatmap of a 1-D or 2-D node grid with mask overlay and a label legend.

    ``values`` are mapped through ``log10`` and normalised to the colour
    table; masked cells are drawn in red on top.  ``labels`` maps component
    id to its integer label and is listed below the plot.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.ndim != 2:
        raise ValueError("svg_heatmap draws 1-D or 2-D grids")
    nx, ny = v.shape
    mk = np.zeros_like(v, dtype=bool) if mask is None else np.asarray(mask, dtype=bool).reshape(v.shape)
    with np.errstate(divide="ignore", invalid="ignore"):
        lv = np.log10(np.where(v > 0, v, np.nan))
    finite = lv[np.isfinite(lv)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    span = hi - lo if hi > lo else 1.0
    cell_w = cell if ny > 1 else max(cell, 4)
    cell_h = cell if ny > 1 else 24
    width = nx * cell_w + 20
    plot_h = ny * cell_h
    legend = sorted((labels or {}).items())
    height = plot_h + 60 + 14 * (len(legend) + 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect width="{width}" height="{height}" fill="#ffffff"/>',
           f'<text x="10" y="14" font-family="monospace" font-size="11">{_esc(title)}</text>']
    y0 = 22
    for i in range(nx):
        for j in range(ny):
            x = 10 + i * cell_w
            y = y0 + (ny - 1 - j) * cell_h
            col = MASK_COLOR if mk[i, j] else _color((lv[i, j] - lo) / span)
            out.append(f'<rect x="{x}" y="{y}" width="{cell_w}" height="{cell_h}" fill="{col}"/>')
    yl = y0 + plot_h + 16
    out.append(f'<text x="10" y="{yl}" font-family="monospace" font-size="10">'
               f'log10 min|eig| in [{lo:.3f}, {hi:.3f}]; red = mask</text>')
    if axes is not None:
        rng = "; ".join(f"axis{a}: [{float(ax[0]):.4g}, {float(ax[-1]):.4g}]" for a, ax in enumerate(axes))
        out.append(f'<text x="10" y="{yl + 14}" font-family="monospace" font-size="10">{_esc(rng)}</text>')
    comp = None if components is None else np.asarray(components).reshape(v.shape)
    for k, (cid, lab) in enumerate(legend):
        n = int(np.count_nonzero(comp == int(cid))) if comp is not None else 0
        out.append(f'<text x="10" y="{yl + 28 + 14 * k}" font-family="monospace" font-size="10">'
                   f'component {cid}: label {lab} ({n} nodes)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def write_scan(outdir, result, extra_report=None, report_name: str = "report.json") -> dict:
    """Write ``degeneracy.csv``, ``mask.csv``, ``components.csv``, ``report.json``, ``scan.svg``."""
    outdir = Path(outdir)
    chart = result.chart
    axes = [chart.axis_values(a) for a in range(chart.ndim)]
    report = result.report()
    if extra_report:
        report.update(extra_report)
    files = {
        "degeneracy.csv": grid_csv(result.degeneracy, axes, "min_abs_eig"),
        "mask.csv": grid_csv(result.bif_mask, axes, "mask"),
        "components.csv": grid_csv(result.components, axes, "component"),
        "scan.svg": svg_heatmap(result.degeneracy if chart.ndim <= 2 else result.degeneracy[..., 0],
                                result.bif_mask if chart.ndim <= 2 else result.bif_mask[..., 0],
                                result.components if chart.ndim <= 2 else result.components[..., 0],
                                result.component_index, report.get("family", report.get("branch", "scan")),
                                axes[:2]),
    }
    for name, text in files.items():
        atomic_write(outdir / name, text)
    write_json(outdir / report_name, report)
    return report
