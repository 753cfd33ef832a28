"""Gridded parameter charts: degeneracy maps, bifurcation masks and components.

All topological statements are made at grid level and carry the chart
resolution they were obtained at.  A chart axis may be *identified*
(wrapped); for sign-compact families the operators at the two ends of a
wrapped axis are related by a :class:`SeamWitness`.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import MaskedBasepoint, SeamMismatch
from .functional_family import FunctionalFamily, find_bifurcation_on_path, segment
from .operator_core import DEFAULT_GAP, SignCompactOperator, SymmetricMatrix
from .spectral_flow import OperatorPath, sfl_crossings, sfl_endpoint, sampled_path

MIN_RESOLUTION = 8
MAX_SKIP = 4
SEAM_TOL = 1e-8


# -- seam witnesses ----------------------------------------------------------


@dataclass(frozen=True)
class SeamWitness:
    """Unitary identification of ``J + K`` at the top of an axis with the bottom.

    ``sources[i]`` says where window direction ``i`` of the bottom operator
    comes from: ``(j, s)`` is window direction ``j`` of the top operator with
    sign ``s``; ``"+"`` / ``"-"`` is a fresh direction borrowed from the +1 /
    -1 tail.  Top window directions not used are handed to the tail of their
    sign, which requires them to be decoupled with diagonal value ``+-1``.
    With no tail borrowing this is a signed permutation.
    """

    sources: tuple

    def apply(self, top: SignCompactOperator, tol: float = SEAM_TOL) -> np.ndarray:
        """Window matrix of ``U top U*`` in the bottom operator's window basis."""
        W = top.window_matrix()
        n = len(self.sources)
        out = np.zeros((n, n))
        used = set()
        src = []
        for s in self.sources:
            if isinstance(s, str):
                if (s == "+" and not top.tail_plus) or (s == "-" and not top.tail_minus):
                    raise SeamMismatch(f"witness borrows from a missing {s} tail")
                src.append(s)
            else:
                j, sign = int(s[0]), float(s[1])
                if j in used:
                    raise SeamMismatch(f"window direction {j} used twice")
                used.add(j)
                src.append((j, sign))
        for i, si in enumerate(src):
            for k, sk in enumerate(src):
                if isinstance(si, str) or isinstance(sk, str):
                    if i == k:
                        out[i, k] = 1.0 if si == "+" else -1.0
                else:
                    out[i, k] = si[1] * sk[1] * W[si[0], sk[0]]
        for j in range(top.window_dim):
            if j in used:
                continue
            d = W[j, j]
            off = np.abs(np.delete(W[j], j)).max(initial=0.0)
            if off > tol or abs(abs(d) - 1.0) > tol:
                raise SeamMismatch(f"window direction {j} is not a decoupled +-1 direction")
            if (d > 0 and not top.tail_plus) or (d < 0 and not top.tail_minus):
                raise SeamMismatch(f"no tail to absorb window direction {j}")
        return out

    def check(self, bottom: SignCompactOperator, top: SignCompactOperator, tol: float = SEAM_TOL):
        conj = self.apply(top, tol)
        if conj.shape != (bottom.window_dim, bottom.window_dim):
            raise SeamMismatch("witness window size differs from the operator window")
        err = float(np.max(np.abs(conj - bottom.window_matrix())))
        if err > tol:
            raise SeamMismatch(f"seam witness mismatch {err:.3e} > {tol:.0e}")
        return err

    def to_json(self):
        return [s if isinstance(s, str) else [int(s[0]), int(s[1])] for s in self.sources]

    @classmethod
    def from_json(cls, obj):
        return cls(tuple(s if isinstance(s, str) else (int(s[0]), int(s[1])) for s in obj))


# -- chart -------------------------------------------------------------------


@dataclass(frozen=True)
class ParameterChart:
    bounds: tuple
    resolution: tuple
    identify: tuple = ()
    seam_witness: tuple = ()

    def __post_init__(self):
        bounds = tuple((float(lo), float(hi)) for lo, hi in self.bounds)
        res = tuple(int(r) for r in self.resolution)
        d = len(bounds)
        if d == 0 or d > 3:
            raise ValueError("charts have 1 to 3 axes")
        if len(res) != d:
            raise ValueError("one resolution per axis")
        if any(r < MIN_RESOLUTION for r in res):
            raise ValueError(f"resolution must be at least {MIN_RESOLUTION} per axis")
        if any(hi <= lo for lo, hi in bounds):
            raise ValueError("bounds must satisfy lo < hi")
        ident = tuple(bool(x) for x in self.identify) or (False,) * d
        wit = tuple(self.seam_witness) or (None,) * d
        if len(ident) != d or len(wit) != d:
            raise ValueError("identify / seam_witness need one entry per axis")
        object.__setattr__(self, "bounds", bounds)
        object.__setattr__(self, "resolution", res)
        object.__setattr__(self, "identify", ident)
        object.__setattr__(self, "seam_witness", wit)

    @property
    def ndim(self) -> int:
        return len(self.bounds)

    @property
    def shape(self) -> tuple:
        return self.resolution

    def step(self, axis: int) -> float:
        lo, hi = self.bounds[axis]
        n = self.resolution[axis]
        return (hi - lo) / (n if self.identify[axis] else n - 1)

    def axis_values(self, axis: int) -> np.ndarray:
        lo, _ = self.bounds[axis]
        return lo + self.step(axis) * np.arange(self.resolution[axis])

    def point(self, idx, offset: Sequence[float] = ()) -> np.ndarray:
        """Coordinates of node ``idx``; ``offset`` adds unrolled steps per axis."""
        off = tuple(offset) + (0,) * (self.ndim - len(offset))
        return np.array([self.bounds[a][0] + self.step(a) * (idx[a] + off[a])
                         for a in range(self.ndim)])

    def nodes(self):
        return itertools.product(*(range(n) for n in self.resolution))

    def shift(self, idx, axis: int, k: int):
        """Index ``k`` steps along ``axis`` (wrapped) or None if off-chart."""
        j = idx[axis] + k
        n = self.resolution[axis]
        if self.identify[axis]:
            j %= n
        elif not 0 <= j < n:
            return None
        out = list(idx)
        out[axis] = j
        return tuple(out)

    def neighbors(self, idx):
        """Adjacent nodes in lexicographic order (axis, then -1 before +1)."""
        out = []
        for axis in range(self.ndim):
            for k in (-1, 1):
                j = self.shift(idx, axis, k)
                if j is not None and j != idx:
                    out.append(j)
        return out

    def nearest_node(self, point) -> tuple:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        idx = []
        for a in range(self.ndim):
            i = int(round((p[a] - self.bounds[a][0]) / self.step(a)))
            n = self.resolution[a]
            idx.append(i % n if self.identify[a] else min(max(i, 0), n - 1))
        return tuple(idx)

    def describe(self) -> dict:
        return {"bounds": [list(b) for b in self.bounds], "resolution": list(self.resolution),
                "identify": list(self.identify),
                "seam_witness": [None if w is None else w.to_json() for w in self.seam_witness]}


# -- per-node field abstraction ---------------------------------------------


class NodeField:
    """Per-node operator data plus a spectral-flow oracle between nodes.

    ``sfl(a, axis, k)`` is the spectral flow of the straight chart path from
    node ``a`` to ``k`` steps further along ``axis`` (unrolled through a seam).
    """

    chart: ParameterChart
    margin: np.ndarray
    kernel_dims: np.ndarray
    failed: np.ndarray

    @property
    def degenerate(self) -> np.ndarray:
        return (self.kernel_dims > 0) & ~self.failed

    def sfl(self, a, axis: int, k: int) -> int:
        raise NotImplementedError

    def crossing_margins(self, a, b):
        """Distance to degeneracy of the two ends of a flagged edge."""
        return self.margin[a], self.margin[b]


class FamilyField(NodeField):
    def __init__(self, F: FunctionalFamily, chart: ParameterChart, gap: float = DEFAULT_GAP,
                 method: str = "endpoint"):
        if F.param_dim != chart.ndim:
            raise ValueError(f"family has {F.param_dim} parameters, chart has {chart.ndim} axes")
        if method not in ("endpoint", "crossings"):
            raise ValueError(f"unknown sfl method {method!r}")
        self.F, self.chart, self.gap, self.method = F, chart, gap, method
        self.ops = {}
        self.margin = np.empty(chart.shape)
        self.kernel_dims = np.zeros(chart.shape, dtype=int)
        self.morse = np.zeros(chart.shape, dtype=int)
        self.eigs = {}
        self.failed = np.zeros(chart.shape, dtype=bool)
        for idx in chart.nodes():
            op = F.operator_at(chart.point(idx))
            self.ops[idx] = op
            w = np.linalg.eigvalsh(np.asarray(op.window_matrix() if isinstance(op, SignCompactOperator)
                                              else op.entries))
            self.eigs[idx] = w
            self.margin[idx] = np.min(np.abs(w))
            self.kernel_dims[idx] = np.count_nonzero(np.abs(w) < gap)
            self.morse[idx] = np.count_nonzero(w < 0)
        self.seam_errors = self._check_seams()

    def _check_seams(self):
        errs = {}
        chart = self.chart
        for axis in range(chart.ndim):
            if not chart.identify[axis]:
                continue
            worst = 0.0
            for idx in chart.nodes():
                if idx[axis] != 0:
                    continue
                bottom = self.ops[idx]
                off = [0] * chart.ndim
                off[axis] = chart.resolution[axis]
                top = self.F.operator_at(chart.point(idx, off))
                w = chart.seam_witness[axis]
                if isinstance(bottom, SignCompactOperator):
                    w = w or SeamWitness(tuple((j, 1) for j in range(bottom.window_dim)))
                    worst = max(worst, w.check(bottom, top))
                else:
                    err = float(np.max(np.abs(bottom.entries - top.entries)))
                    if err > SEAM_TOL:
                        raise SeamMismatch(f"axis {axis}: dense operators differ across seam ({err:.3e})")
                    worst = max(worst, err)
            errs[axis] = worst
        return errs

    def _op(self, point):
        return self.F.operator_at(point)

    def _segment_sfl(self, pa, pb, op_a=None, op_b=None) -> int:
        if self.method == "endpoint":
            a = op_a if op_a is not None else self._op(pa)
            b = op_b if op_b is not None else self._op(pb)
            path = OperatorPath(lambda t: a if t < 0.5 else b, self.F.kind, self.gap)
            return sfl_endpoint(path).value
        gamma = segment(pa, pb)
        path = OperatorPath(lambda t: self.F.operator_at(gamma(t)), self.F.kind, self.gap)
        return sfl_crossings(path, n_init=8, gap=self.gap).value

    def sfl(self, a, axis, k):
        chart = self.chart
        n = chart.resolution[axis]
        end = a[axis] + k
        b = chart.shift(a, axis, k)
        if not chart.identify[axis] or end < n:
            return self._segment_sfl(chart.point(a), chart.point(b), self.ops[a], self.ops[b])
        # split at the seam: the top operator is identified with the bottom one
        off_top = [0] * chart.ndim
        off_top[axis] = n - a[axis]
        bottom_idx = list(a)
        bottom_idx[axis] = 0
        bottom_idx = tuple(bottom_idx)
        first = self._segment_sfl(chart.point(a), chart.point(a, off_top), self.ops[a], None)
        if b == bottom_idx:
            return first
        return first + self._segment_sfl(chart.point(bottom_idx), chart.point(b),
                                         self.ops[bottom_idx], self.ops[b])

    def crossing_margins(self, a, b):
        # only the eigenvalues that change sign along the edge matter; the
        # overall margin may come from a different degeneracy sheet
        lo, hi = sorted((int(self.morse[a]), int(self.morse[b])))
        if lo == hi:
            return self.margin[a], self.margin[b]
        return (float(np.min(np.abs(self.eigs[a][lo:hi]))),
                float(np.min(np.abs(self.eigs[b][lo:hi]))))

    def segment_points(self, a, axis, k):
        """Chart points bracketing an unrolled segment (for confirm mode)."""
        off = [0] * self.chart.ndim
        off[axis] = k
        return self.chart.point(a), self.chart.point(a, off)


# -- edge labels --------------------------------------------------------------


@dataclass
class EdgeSfl:
    """Spectral flow along grid edges, plus straddles over degenerate nodes.

    ``values[(a, axis, k)]`` is the sfl from node ``a`` to the first
    labelable node ``k`` steps along ``axis``; ``k = 1`` entries are plain
    grid edges.
    """

    values: dict = field(default_factory=dict)
    skipped: list = field(default_factory=list)

    def edges(self) -> dict:
        return {(a, axis): v for (a, axis, k), v in self.values.items() if k == 1}


def _labelable(field_: NodeField):
    return ~field_.degenerate & ~field_.failed


def edge_sfl_labels(field_: NodeField) -> EdgeSfl:
    chart = field_.chart
    ok = _labelable(field_)
    out = EdgeSfl()
    for a in chart.nodes():
        for axis in range(chart.ndim):
            b = chart.shift(a, axis, 1)
            if b is None or b == a:
                continue
            if not ok[a]:
                if not field_.failed[a] and ok[b]:
                    out.skipped.append((a, axis))
                continue
            if ok[b]:
                out.values[(a, axis, 1)] = field_.sfl(a, axis, 1)
                continue
            if field_.failed[b]:
                out.skipped.append((a, axis))
                continue
            out.skipped.append((a, axis))
            for k in range(2, MAX_SKIP + 1):
                c = chart.shift(a, axis, k)
                if c is None or c == a or field_.failed[c]:
                    break
                if ok[c]:
                    out.values[(a, axis, k)] = field_.sfl(a, axis, k)
                    break
    return out


# -- mask ---------------------------------------------------------------------


def bifurcation_mask(field_: NodeField, edges: EdgeSfl, mode: str = "fast",
                     confirm: Optional[Callable] = None):
    """Cells forced into the bifurcation set by a nonzero spectral flow.

    For a grid edge with nonzero sfl the endpoint closer to degeneracy (smaller
    ``|eigenvalue|`` among the eigenvalues changing sign) is masked; a straddle over degenerate nodes masks the
    degenerate nodes it jumps over.  In ``"confirm"`` mode each flagged cell is
    kept only if ``confirm(point_a, point_b)`` certifies a bifurcation on the
    flagging segment.  Returns ``(mask, evidence)`` where ``evidence`` maps a
    masked cell to the segment that flagged it.
    """
    if mode not in ("fast", "confirm"):
        raise ValueError(f"unknown mask mode {mode!r}")
    chart = field_.chart
    mask = np.zeros(chart.shape, dtype=bool)
    evidence = {}
    for (a, axis, k), v in sorted(edges.values.items()):
        if v == 0:
            continue
        if k == 1:
            b = chart.shift(a, axis, 1)
            ma, mb = field_.crossing_margins(a, b)
            cells = [a if ma <= mb else b]
        else:
            cells = [chart.shift(a, axis, j) for j in range(1, k)]
        for c in cells:
            if c not in evidence:
                evidence[c] = (a, axis, k)
            mask[c] = True
    if mode == "confirm":
        if confirm is None:
            raise ValueError("confirm mode needs a confirm callback")
        cache = {}
        for c, seg in list(evidence.items()):
            if seg not in cache:
                cache[seg] = bool(confirm(*seg))
            if not cache[seg]:
                mask[c] = False
                del evidence[c]
    return mask, evidence


# -- components ----------------------------------------------------------------


class DisjointSet:
    def __init__(self, n):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=int)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        a, b = self.find(a), self.find(b)
        if a == b:
            return False
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return True


def _components(shape, wrap, open_nodes: np.ndarray) -> np.ndarray:
    """Component ids of ``open_nodes`` under grid adjacency; -1 elsewhere.

    ``wrap[axis]`` joins the last node of that axis to the first.  Ids are
    assigned in row-major order of each component's first node.
    """
    shape = tuple(shape)
    flat = np.ravel_multi_index
    ds = DisjointSet(int(np.prod(shape)))
    nodes = list(itertools.product(*(range(n) for n in shape)))
    for a in nodes:
        if not open_nodes[a]:
            continue
        for axis, n in enumerate(shape):
            j = a[axis] + 1
            if j == n:
                if not wrap[axis]:
                    continue
                j = 0
            b = a[:axis] + (j,) + a[axis + 1:]
            if open_nodes[b]:
                ds.union(flat(a, shape), flat(b, shape))
    comp = -np.ones(shape, dtype=int)
    ids = {}
    for a in nodes:
        if open_nodes[a]:
            r = ds.find(flat(a, shape))
            comp[a] = ids.setdefault(r, len(ids))
    return comp


@dataclass
class ComponentReport:
    components: np.ndarray
    labels: np.ndarray
    labeled: np.ndarray
    component_index: dict
    report: dict


def _label_graph(chart, edges: EdgeSfl):
    adj = {}
    for (a, axis, k), v in edges.values.items():
        b = chart.shift(a, axis, k)
        adj.setdefault(a, []).append((b, v))
        adj.setdefault(b, []).append((a, -v))
    for a in adj:
        adj[a].sort()
    return adj


def _loop_defects(chart, edges: EdgeSfl, basepoint):
    out = {}
    for axis in range(chart.ndim):
        if not chart.identify[axis]:
            continue
        total, steps, a = 0, 0, basepoint
        n = chart.resolution[axis]
        ok = True
        while steps < n:
            for k in range(1, MAX_SKIP + 1):
                if (a, axis, k) in edges.values:
                    total += edges.values[(a, axis, k)]
                    a = chart.shift(a, axis, k)
                    steps += k
                    break
            else:
                ok = False
                break
        out[axis] = total if ok and a == basepoint else None
    return out


def _has_solid_block(chart, mask):
    for a in chart.nodes():
        block = []
        for offs in itertools.product((0, 1), repeat=chart.ndim):
            c = a
            for axis, o in enumerate(offs):
                c = chart.shift(c, axis, o) if c is not None else None
            block.append(c)
        if all(c is not None and mask[c] for c in block) and len(set(block)) == 2 ** chart.ndim:
            return True
    return False


def _subwindow_sweep(chart, open_nodes):
    """Axis-aligned half-size windows whose unmasked part falls apart."""
    if chart.ndim < 1:
        return []
    sizes = [max(MIN_RESOLUTION // 2, n // 2) for n in chart.resolution]
    strides = [max(1, s // 2) for s in sizes]
    found = []
    starts = [range(0, n - s + 1, st) for n, s, st in zip(chart.resolution, sizes, strides)]
    for start in itertools.product(*starts):
        sl = tuple(slice(s0, s0 + s) for s0, s in zip(start, sizes))
        comp = _components(sizes, (False,) * chart.ndim, open_nodes[sl])
        n_comp = int(comp.max()) + 1
        if n_comp > 1:
            found.append({"start": list(start), "size": list(sizes), "components": n_comp})
    return found


def components_and_labels(chart: ParameterChart, mask: np.ndarray, edges: EdgeSfl, basepoint,
                          failed: Optional[np.ndarray] = None) -> ComponentReport:
    """Connected components of the unmasked grid and their spectral-flow labels.

    Labels are accumulated edge spectral flows along a BFS spanning tree from
    ``basepoint`` (lexicographic neighbour order), traversing every labelable
    node, masked or not.  A label mismatch on a non-tree edge inside one
    component is only possible on charts with wrapped axes; the winding sfl
    along each wrapped axis through the basepoint is reported as that axis'
    loop defect.
    """
    basepoint = tuple(int(i) for i in basepoint)
    failed = np.zeros(chart.shape, dtype=bool) if failed is None else failed
    if mask[basepoint] or failed[basepoint]:
        raise MaskedBasepoint(f"basepoint {basepoint} is masked")
    open_nodes = ~mask & ~failed
    comp = _components(chart.shape, chart.identify, open_nodes)

    adj = _label_graph(chart, edges)
    labels = np.zeros(chart.shape, dtype=int)
    labeled = np.zeros(chart.shape, dtype=bool)
    labeled[basepoint] = True
    queue = deque([basepoint])
    while queue:
        a = queue.popleft()
        for b, v in adj.get(a, ()):
            if not labeled[b]:
                labels[b] = labels[a] + v
                labeled[b] = True
                queue.append(b)

    inconsistent = []
    for (a, axis, k), v in sorted(edges.values.items()):
        b = chart.shift(a, axis, k)
        if labeled[a] and labeled[b] and labels[b] != labels[a] + v:
            inconsistent.append({"from": list(a), "to": list(b), "defect": int(labels[a] + v - labels[b]),
                                 "same_component": bool(comp[a] >= 0 and comp[a] == comp[b])})

    component_index = {}
    mixed = []
    for cid in range(int(comp.max()) + 1):
        members = comp == cid
        vals = np.unique(labels[members & labeled])
        component_index[cid] = int(vals[0]) if vals.size else None
        if vals.size > 1:
            mixed.append(cid)

    loops = _loop_defects(chart, edges, basepoint)
    loop_vals = [abs(v) for v in loops.values() if v is not None]
    isolated = 0
    n_masked = int(mask.sum())
    for a in chart.nodes():
        if mask[a] and not any(mask[b] for b in chart.neighbors(a)):
            isolated += 1
    codim1 = chart.ndim == 1 or isolated == 0
    distinct = sorted({v for v in component_index.values() if v is not None})
    report = {
        "resolution": list(chart.resolution),
        "n_components": len(component_index),
        "component_labels": {str(k): v for k, v in component_index.items()},
        "distinct_labels": distinct,
        "components_with_mixed_labels": mixed,
        "label_inconsistencies": len([x for x in inconsistent if x["same_component"]]),
        "non_tree_defects": inconsistent[:20],
        "loop_defects": {str(k): v for k, v in loops.items()},
        "label_defect": max(loop_vals) if loop_vals else 0,
        "masked_cells": n_masked,
        "interior_points": _has_solid_block(chart, mask) if n_masked else False,
        "isolated_mask_cells": isolated,
        "interface_fraction": (1.0 - isolated / n_masked) if n_masked else None,
        "dim_proxy_ok": bool(codim1),
        "dim_proxy_note": "grid proxy: no isolated mask cells (codimension-one interfaces); "
                          "not a covering-dimension computation",
        "disconnected_subwindows": _subwindow_sweep(chart, open_nodes),
        "disconnects_chart": len(component_index) > 1,
    }
    return ComponentReport(comp, labels, labeled, component_index, report)


# -- full scan -------------------------------------------------------------------


@dataclass
class ScanResult:
    chart: ParameterChart
    degeneracy: np.ndarray
    kernel_dims: np.ndarray
    bif_mask: np.ndarray
    edge_sfl: dict
    components: np.ndarray
    component_index: dict
    labels: np.ndarray
    labeled: np.ndarray
    failed: np.ndarray
    stats: dict
    evidence: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    index_grid: Optional[np.ndarray] = None

    def report(self) -> dict:
        out = dict(self.stats)
        out["chart"] = self.chart.describe()
        out["failed_nodes"] = int(self.failed.sum())
        out["degenerate_nodes"] = int(((self.kernel_dims > 0) & ~self.failed).sum())
        out.update(self.extra)
        return out


def degeneracy_map(F: FunctionalFamily, chart: ParameterChart, gap: float = DEFAULT_GAP):
    """Per-node ``min |eigenvalue|`` and kernel dimension of the Hessian at 0."""
    f = FamilyField(F, chart, gap)
    return f.margin, f.kernel_dims


def run_scan(field_: NodeField, basepoint, mode: str = "fast",
             confirm: Optional[Callable] = None) -> ScanResult:
    chart = field_.chart
    edges = edge_sfl_labels(field_)
    if mode == "confirm" and confirm is not None:
        def seg_confirm(a, axis, k):
            return confirm(*field_.segment_points(a, axis, k))
    else:
        seg_confirm = None
    mask, evidence = bifurcation_mask(field_, edges, mode, seg_confirm)
    bp = basepoint if isinstance(basepoint, tuple) else chart.nearest_node(basepoint)
    comps = components_and_labels(chart, mask, edges, bp, field_.failed)
    stats = dict(comps.report)
    stats["basepoint"] = list(bp)
    stats["skipped_edges"] = len(edges.skipped)
    stats["mode"] = mode
    return ScanResult(chart, field_.margin, field_.kernel_dims, mask, edges.edges(),
                      comps.components, comps.component_index, comps.labels, comps.labeled,
                      field_.failed, stats, evidence)


def scan_family(F: FunctionalFamily, chart: ParameterChart, basepoint, mode: str = "fast",
                gap: float = DEFAULT_GAP, method: str = "endpoint",
                radii: Sequence[float] = (1e-2, 1e-3, 1e-4)) -> ScanResult:
    """Degeneracy map, edge sfl, mask and labelled components of ``X \\ B(f)``."""
    field_ = FamilyField(F, chart, gap, method)

    def confirm(pa, pb):
        recs = find_bifurcation_on_path(F, segment(pa, pb), n_scan=16, radii=radii, gap=gap)
        return any(r.certified for r in recs)

    result = run_scan(field_, basepoint, mode, confirm)
    result.extra["family"] = F.name
    result.extra["seam_errors"] = {str(k): v for k, v in field_.seam_errors.items()}
    return result
