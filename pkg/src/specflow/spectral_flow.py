"""Spectral flow of operator paths.

Two independent routes are provided: :func:`sfl_crossings` tracks window
Morse indices along the path with adaptive bisection, and
:func:`sfl_endpoint` evaluates the relative Morse index of the endpoints of a
path already in ``J + K`` normal form.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    DegenerateOperator,
    DimensionMismatch,
    EndpointDegenerateInHomotopy,
    EndpointMismatch,
    MismatchedJ,
    UnresolvedCrossing,
)
from .operator_core import (
    DEFAULT_GAP,
    SignCompactOperator,
    SymmetricMatrix,
    operator_from_json,
    relative_morse_index,
    relative_morse_index_sc,
)

DENSE = "dense"
SIGN_COMPACT = "sign_compact"

GUARD_FACTOR = 10.0
MAX_DEPTH = 40
_JITTER = (0.5, 0.4, 0.6, 0.25, 0.75, 0.1, 0.9)
ISOLATION_FACTOR = 1e-2


@dataclass(frozen=True)
class OperatorPath:
    """Continuous family ``t -> operator`` on ``[0, 1]``.

    ``sampler`` returns a :class:`SymmetricMatrix` (or plain array) for
    ``kind="dense"`` and a :class:`SignCompactOperator` for
    ``kind="sign_compact"``.  Continuity is the caller's contract.
    """

    sampler: Callable[[float], object]
    kind: str = DENSE
    endpoint_gap: float = DEFAULT_GAP

    def __post_init__(self):
        if self.kind not in (DENSE, SIGN_COMPACT):
            raise ValueError(f"unknown path kind {self.kind!r}")

    def __call__(self, t: float):
        return self.sampler(float(t))

    def window(self, t: float) -> np.ndarray:
        op = self.sampler(float(t))
        if isinstance(op, SignCompactOperator):
            return op.window_matrix()
        if isinstance(op, SymmetricMatrix):
            return op.entries
        a = np.asarray(op, dtype=float)
        return 0.5 * (a + a.T)

    def endpoint_margins(self) -> tuple[float, float]:
        return tuple(float(np.min(np.abs(np.linalg.eigvalsh(self.window(t))))) for t in (0.0, 1.0))

    def check_admissible(self):
        for t, m in zip((0.0, 1.0), self.endpoint_margins()):
            if m < self.endpoint_gap:
                raise DegenerateOperator(
                    f"path endpoint t={t:g} has min |eigenvalue| {m:.3e} < {self.endpoint_gap:.1e}", m
                )


@dataclass
class SflResult:
    value: int
    crossings: list = field(default_factory=list)
    refinement_depth: int = 0
    method: str = "crossings"

    def to_json(self) -> dict:
        return {
            "value": self.value,
            "crossings": [{"t": t, "direction": d, "multiplicity": m} for t, d, m in self.crossings],
            "refinement_depth": self.refinement_depth,
            "method": self.method,
        }


class _Probe:
    """Caches window eigenvalues of a path, keyed by t."""

    def __init__(self, path: OperatorPath, gap: float):
        self.path = path
        self.gap = gap
        self.cache = {}
        self.j = None

    def eig(self, t):
        w = self.cache.get(t)
        if w is None:
            op = self.path(t)
            if isinstance(op, SignCompactOperator):
                if self.j is None:
                    self.j = op
                elif not op.same_j(self.j):
                    raise MismatchedJ(f"J changes along the path (at t={t:g})")
                a = op.window_matrix()
            else:
                a = np.asarray(op, dtype=float)
            w = np.linalg.eigvalsh(0.5 * (a + a.T))
            self.cache[t] = w
        return w

    def margin(self, t):
        return float(np.min(np.abs(self.eig(t))))

    def morse(self, t):
        return int(np.count_nonzero(self.eig(t) < 0))

    def ok(self, t):
        return self.margin(t) >= self.gap


def sfl_crossings(path: OperatorPath, n_init: int = 32, tol: float = 1e-9,
                  gap: float | None = None, resolution: float = 1e-6) -> SflResult:
    """Spectral flow by sampling window eigenvalues and bisecting crossings.

    Each sub-interval whose endpoint Morse indices differ, or whose endpoints
    sit inside the guard band ``10 * gap``, is bisected until shorter than
    ``tol``.  A crossing contributes ``morse(a) - morse(b)`` (eigenvalues moving
    from negative to positive count as ``+1``), so collisions of several
    eigenvalues are resolved without pairing them.

    When no invertible operator can be found inside an interval that is
    still wider than ``resolution``, the degeneracy is not isolated and
    :class:`UnresolvedCrossing` is raised.
    """
    if n_init < 2:
        raise ValueError("n_init must be at least 2")
    gap = path.endpoint_gap if gap is None else gap
    path.check_admissible()
    probe = _Probe(path, gap)
    guard = GUARD_FACTOR * gap

    ts = [t for t in np.linspace(0.0, 1.0, n_init + 1)]
    good = [t for t in ts if probe.ok(t)]  # endpoints are guaranteed ok

    crossings = []
    max_depth = 0

    def midpoint(a, b):
        for f in _JITTER:
            m = a + f * (b - a)
            if a < m < b and probe.ok(m):
                return m
        return None

    def isolated(a, b):
        # a slow transversal crossing leaves no invertible sample in a window of
        # width ~2*gap/speed; the eigenvalue still moves there, unlike on a kernel arc
        inner = [probe.margin(a + f * (b - a)) for f in _JITTER]
        return max(inner) >= ISOLATION_FACTOR * gap

    stack = [(a, b, 0) for a, b in zip(good[:-1], good[1:])][::-1]
    while stack:
        a, b, depth = stack.pop()
        max_depth = max(max_depth, depth)
        ma, mb = probe.morse(a), probe.morse(b)
        near = probe.margin(a) < guard or probe.margin(b) < guard
        if ma == mb and not near:
            continue
        if b - a <= tol or depth >= MAX_DEPTH:
            if ma != mb:
                d = ma - mb
                crossings.append((0.5 * (a + b), int(np.sign(d)), abs(d)))
            continue
        m = midpoint(a, b)
        if m is None:
            if ma == mb:
                continue
            if b - a <= resolution or isolated(a, b):
                d = ma - mb
                crossings.append((0.5 * (a + b), int(np.sign(d)), abs(d)))
                continue
            raise UnresolvedCrossing(
                f"no invertible operator found inside [{a:.12g}, {b:.12g}]; degenerate arc?", (a, b)
            )
        stack.append((m, b, depth + 1))
        stack.append((a, m, depth + 1))

    crossings.sort()
    value = int(sum(d * k for _, d, k in crossings))
    return SflResult(value, crossings, max_depth, "crossings")


def sfl_endpoint(path: OperatorPath, gap: float | None = None) -> SflResult:
    """Spectral flow as the relative Morse index of the two endpoints."""
    gap = path.endpoint_gap if gap is None else gap
    a, b = path(0.0), path(1.0)
    if path.kind == SIGN_COMPACT:
        value = relative_morse_index_sc(a, b, gap)
    else:
        value = relative_morse_index(a, b, gap)
    return SflResult(int(value), [], 0, "endpoint")


def reverse(p: OperatorPath) -> OperatorPath:
    sampler = p.sampler
    return OperatorPath(lambda t: sampler(1.0 - t), p.kind, p.endpoint_gap)


def _same_operator(x, y, tol):
    if isinstance(x, SignCompactOperator) or isinstance(y, SignCompactOperator):
        if not (isinstance(x, SignCompactOperator) and isinstance(y, SignCompactOperator)):
            return False
        if not x.same_j(y):
            return False
    a = x.window_matrix() if isinstance(x, SignCompactOperator) else np.asarray(x, dtype=float)
    b = y.window_matrix() if isinstance(y, SignCompactOperator) else np.asarray(y, dtype=float)
    return a.shape == b.shape and np.max(np.abs(a - b), initial=0.0) <= tol


def concatenate(p1: OperatorPath, p2: OperatorPath, tol: float = 1e-8) -> OperatorPath:
    """Run ``p1`` on ``[0, 1/2]`` and ``p2`` on ``[1/2, 1]``."""
    if p1.kind != p2.kind:
        raise EndpointMismatch(f"cannot join a {p1.kind} path to a {p2.kind} path")
    if not _same_operator(p1(1.0), p2(0.0), tol):
        raise EndpointMismatch("end of the first path differs from start of the second")
    s1, s2 = p1.sampler, p2.sampler

    def sampler(t):
        return s1(2.0 * t) if t <= 0.5 else s2(2.0 * t - 1.0)

    return OperatorPath(sampler, p1.kind, max(p1.endpoint_gap, p2.endpoint_gap))


def constant_path(op, kind: str | None = None, gap: float = DEFAULT_GAP) -> OperatorPath:
    kind = kind or (SIGN_COMPACT if isinstance(op, SignCompactOperator) else DENSE)
    return OperatorPath(lambda t: op, kind, gap)


def reparameterize(p: OperatorPath, phi: Callable[[float], float]) -> OperatorPath:
    """``t -> p(phi(t))`` for a map ``phi`` of ``[0,1]`` fixing both ends."""
    sampler = p.sampler
    return OperatorPath(lambda t: sampler(float(phi(t))), p.kind, p.endpoint_gap)


def cogredient(p: OperatorPath, M: Callable[[float], np.ndarray]) -> OperatorPath:
    """Path ``t -> M_t^T L_t M_t`` for window-local invertible ``M_t``."""
    sampler = p.sampler

    def conj(t):
        op = sampler(t)
        m = np.asarray(M(t), dtype=float)
        if isinstance(op, SignCompactOperator):
            w = m.T @ op.window_matrix() @ m
            return SignCompactOperator.from_window(op.j_window, w, op.tail_plus, op.tail_minus)
        a = np.asarray(op, dtype=float)
        return SymmetricMatrix(m.T @ a @ m)

    return OperatorPath(conj, p.kind, p.endpoint_gap)


def krasnoselskii_path(n: int, window: int | None = None, gap: float = DEFAULT_GAP) -> OperatorPath:
    """``t -> id + t K_n`` with ``K_n = -2`` times the projection on the first ``n`` axes.

    Sign-compact with ``J = id`` (a +1 tail); the window has ``window``
    directions, ``2 n`` by default.
    """
    if n < 1:
        raise ValueError("n must be positive")
    w = 2 * n if window is None else int(window)
    if w < n:
        raise ValueError("window must hold the n perturbed directions")
    k = np.zeros(w)
    k[:n] = -2.0
    j = np.ones(w)

    def sampler(t):
        return SignCompactOperator(j, SymmetricMatrix(np.diag(t * k)), True, False)

    return OperatorPath(sampler, SIGN_COMPACT, gap)


def linear_path(A, B, gap: float = DEFAULT_GAP) -> OperatorPath:
    """Straight segment between two operators of the same kind."""
    return sampled_path([0.0, 1.0], [A, B], gap=gap)


def sampled_path(ts: Sequence[float], operators: Sequence, gap: float = DEFAULT_GAP) -> OperatorPath:
    """Path through sampled operators with linear interpolation between samples."""
    ts = np.asarray(ts, dtype=float)
    if ts.ndim != 1 or ts.size < 2 or np.any(np.diff(ts) <= 0):
        raise ValueError("sample times must be strictly increasing, at least two")
    if ts[0] != 0.0 or ts[-1] != 1.0:
        raise ValueError("samples must span exactly [0, 1]")
    ops = list(operators)
    if len(ops) != ts.size:
        raise DimensionMismatch("one operator per sample time required")
    if all(isinstance(o, SignCompactOperator) for o in ops):
        j0 = ops[0]
        if not all(o.same_j(j0) for o in ops):
            raise MismatchedJ("sampled sign-compact operators must share J")
        stack = np.stack([o.k_window.entries for o in ops])

        def make(k):
            return SignCompactOperator(j0.j_window, SymmetricMatrix(k), j0.tail_plus, j0.tail_minus)
        kind = SIGN_COMPACT
    elif not any(isinstance(o, SignCompactOperator) for o in ops):
        stack = np.stack([np.asarray(o, dtype=float) for o in ops])
        make = SymmetricMatrix
        kind = DENSE
    else:
        raise MismatchedJ("cannot mix dense and sign-compact samples")

    def sampler(t):
        i = int(np.clip(np.searchsorted(ts, t, side="right") - 1, 0, ts.size - 2))
        w = (t - ts[i]) / (ts[i + 1] - ts[i])
        return make((1.0 - w) * stack[i] + w * stack[i + 1])

    return OperatorPath(sampler, kind, gap)


def path_to_json(path: OperatorPath, ts: Sequence[float]) -> dict:
    samples = []
    for t in ts:
        op = path(t)
        if not isinstance(op, (SymmetricMatrix, SignCompactOperator)):
            op = SymmetricMatrix(op)
        samples.append({"t": float(t), "operator": op.to_json()})
    return {"kind": path.kind, "samples": samples, "interpolation": "linear"}


def path_from_json(obj, gap: float = DEFAULT_GAP) -> OperatorPath:
    if isinstance(obj, str):
        obj = json.loads(obj)
    if obj.get("interpolation", "linear") != "linear":
        raise ValueError(f"unsupported interpolation {obj['interpolation']!r}")
    samples = sorted(obj["samples"], key=lambda s: s["t"])
    path = sampled_path([s["t"] for s in samples],
                        [operator_from_json(s["operator"]) for s in samples], gap=gap)
    if path.kind != obj["kind"]:
        raise ValueError(f"declared kind {obj['kind']!r} but samples are {path.kind!r}")
    return path


@dataclass
class HomotopyReport:
    values: list
    consistent: bool
    value: int
    endpoint_margin: float
    s_values: list

    def to_json(self) -> dict:
        return {"values": self.values, "consistent": self.consistent, "value": self.value,
                "endpoint_margin": self.endpoint_margin}


def homotopy_check(h: Callable[[float, float], object], n_s: int = 11, kind: str = DENSE,
                   gap: float = DEFAULT_GAP, n_init: int = 32, threads: int = 1) -> HomotopyReport:
    """Spectral flow of every sampled slice ``t -> h(s, t)``.

    ``endpoint_margin`` is the smallest endpoint ``min |eigenvalue|`` seen
    over all slices, i.e. how far the homotopy stays from violating its
    fixed-invertible-ends hypothesis.
    """
    s_values = [float(s) for s in np.linspace(0.0, 1.0, n_s)]

    def one(s):
        path = OperatorPath(lambda t, s=s: h(s, t), kind, gap)
        margins = path.endpoint_margins()
        if min(margins) < gap:
            raise EndpointDegenerateInHomotopy(
                f"slice s={s:g} has a degenerate endpoint (margin {min(margins):.3e})", s
            )
        return sfl_crossings(path, n_init=n_init, gap=gap).value, min(margins)

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(one, s_values))
    else:
        out = [one(s) for s in s_values]
    values = [v for v, _ in out]
    return HomotopyReport(values, len(set(values)) == 1, values[0],
                          float(min(m for _, m in out)), s_values)
