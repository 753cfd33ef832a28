"""Semi-Riemannian geodesics, Jacobi fields and the spectral index.

Metrics are given in a single coordinate chart as vectorised callbacks
``metric(lam, x) -> (..., m, m)``.  Christoffel symbols and curvature come
from central finite differences, so any smooth registry metric works without
symbolic input.

Along a geodesic we carry a parallel frame ``E`` that is g-orthonormal at
``t = 0`` with ``g(E_i, E_j) = eps_i delta_ij``; ``E_0`` is the unit tangent.
In that frame the Jacobi equation on the transverse directions reads
``x'' = -Eps S(t) x`` with ``S_ij = g(R(E_i, g')g', E_j)``, and the second
variation of the sub-geodesic ``t -> gamma(s t)`` is

    h_s(x) = int_0^1 x'^T Eps x' - s^2 x^T S(s t) x dt,

discretised on hat functions and returned in the H^1_0 Riesz form, whose
spectrum does not drift with the mesh.
"""

from __future__ import annotations

import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import cholesky, solve_triangular

from .errors import (
    ChartExit,
    CurvatureCheckFailed,
    DegenerateEndpoint,
    SingularMetric,
    TangentialDegeneracy,
    UnknownFamily,
)
from .operator_core import DEFAULT_GAP, SymmetricMatrix
from .parameter_scan import NodeField, ParameterChart, ScanResult, run_scan
from .spectral_flow import DENSE, OperatorPath, sfl_crossings

H_CHRISTOFFEL = 1e-3
H_CURVATURE = 1e-4
STEP_TOL = 1e-9
CONJ_TOL = 1e-6
BIANCHI_TOL = 1e-4
_STENCIL = ((-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0))  # offset, weight / 12h


# -- metric families ----------------------------------------------------------


@dataclass(frozen=True)
class MetricFamily:
    """Parameterised metric on one coordinate chart.

    ``metric(lam, x)`` broadcasts over leading axes of ``lam`` (``..., param_dim``)
    and ``x`` (``..., m``).  ``bounds`` are the chart limits per coordinate.
    """

    name: str
    manifold_dim: int
    param_dim: int
    metric: Callable
    signature: int
    bounds: tuple
    default_lambda: tuple = ()
    description: str = ""
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 1 <= self.manifold_dim <= 4:
            raise ValueError("manifold_dim must be between 1 and 4")
        if not 0 <= self.signature <= self.manifold_dim:
            raise ValueError("signature out of range")
        if len(self.bounds) != self.manifold_dim:
            raise ValueError("one (lo, hi) bound per coordinate")

    def lam(self, lam=None) -> np.ndarray:
        lam = self.default_lambda if lam is None else lam
        out = np.asarray(lam, dtype=float)
        if out.shape[-1:] != (self.param_dim,) and not (self.param_dim == 0 and out.size == 0):
            raise ValueError(f"{self.name} expects {self.param_dim} parameters, got shape {out.shape}")
        return out.reshape(out.shape[:-1] + (self.param_dim,)) if out.ndim else out.reshape(0)

    def g(self, lam, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lam = np.asarray(lam, dtype=float)
        shape = np.broadcast_shapes(x.shape[:-1], lam.shape[:-1])
        g = np.asarray(self.metric(lam, x), dtype=float)
        return np.broadcast_to(g, shape + (self.manifold_dim,) * 2)

    def in_chart(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.all((x >= lo) & (x <= hi), axis=-1)

    def check_signature(self, lam, x) -> bool:
        w = np.linalg.eigvalsh(self.g(lam, x))
        return bool(np.all(np.count_nonzero(w < 0, axis=-1) == self.signature))


def _diag_metric(*entries):
    parts = np.broadcast_arrays(*entries)
    m = len(parts)
    out = np.zeros(parts[0].shape + (m, m))
    for i, p in enumerate(parts):
        out[..., i, i] = p
    return out


_POLE = 0.01
_WIDE = 1e3


def euclidean(dim: int = 2) -> MetricFamily:
    def metric(lam, x):
        return np.zeros(x.shape[:-1] + (dim, dim)) + np.eye(dim)

    return MetricFamily("euclidean", dim, 0, metric, 0, ((-_WIDE, _WIDE),) * dim,
                        description="flat metric in Cartesian coordinates")


def round_sphere(radius: float = 1.0) -> MetricFamily:
    """Sphere of radius ``lam[0]`` in colatitude / longitude, poles excluded."""

    def metric(lam, x):
        r2 = lam[..., 0] ** 2
        return _diag_metric(r2 + 0 * x[..., 0], r2 * np.sin(x[..., 0]) ** 2)

    return MetricFamily("round_sphere", 2, 1, metric, 0,
                        ((_POLE, math.pi - _POLE), (-_WIDE, _WIDE)), (float(radius),),
                        "round sphere, chart (colatitude, longitude)")


def ellipsoid_revolution(c: float = 1.0) -> MetricFamily:
    """Spheroid with unit equator and polar semi-axis ``lam[0]``.

    The equator is a geodesic with Gauss curvature ``1 / c^2``.
    """

    def metric(lam, x):
        c2 = lam[..., 0] ** 2
        s, co = np.sin(x[..., 0]), np.cos(x[..., 0])
        return _diag_metric(co ** 2 + c2 * s ** 2, s ** 2)

    return MetricFamily("ellipsoid_revolution", 2, 1, metric, 0,
                        ((_POLE, math.pi - _POLE), (-_WIDE, _WIDE)), (float(c),),
                        "spheroid of revolution, chart (colatitude, longitude)")


def flat_torus() -> MetricFamily:
    def metric(lam, x):
        return np.zeros(x.shape[:-1] + (2, 2)) + np.eye(2)

    return MetricFamily("flat_torus", 2, 0, metric, 0, ((-_WIDE, _WIDE),) * 2,
                        description="flat torus, universal-cover chart")


def split_spheres(a: float = 1.0, b: float = 1.0, p: float = 1.0, q: float = 0.7) -> MetricFamily:
    """``S^2(a) x S^2(b)`` with metric ``g_a (+) (-g_b)``: index 2 on a 4-manifold.

    ``p`` and ``q`` are the factor speeds of the registry branch (see
    :func:`split_spheres_branch`).
    """

    def metric(lam, x):
        a2, b2 = lam[..., 0] ** 2, lam[..., 1] ** 2
        return _diag_metric(a2 + 0 * x[..., 0], a2 * np.sin(x[..., 0]) ** 2,
                            -b2 + 0 * x[..., 2], -b2 * np.sin(x[..., 2]) ** 2)

    bounds = ((_POLE, math.pi - _POLE), (-_WIDE, _WIDE)) * 2
    return MetricFamily("split_spheres", 4, 2, metric, 2, bounds, (float(a), float(b)),
                        "product of two round spheres, second factor negated",
                        {"p": float(p), "q": float(q)})


GEOMETRIES = {
    "euclidean": euclidean,
    "round_sphere": round_sphere,
    "ellipsoid_revolution": ellipsoid_revolution,
    "flat_torus": flat_torus,
    "split_spheres": split_spheres,
}

_GEOM_RE = re.compile(r"^\s*([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*$")


def geometry(spec: str) -> MetricFamily:
    """Parse a registry string such as ``"round_sphere(1.0)"``."""
    m = _GEOM_RE.match(spec)
    if not m or m.group(1) not in GEOMETRIES:
        raise UnknownFamily(f"unknown geometry {spec!r}; known: {sorted(GEOMETRIES)}")
    args = [a.strip() for a in (m.group(2) or "").split(",") if a.strip()]
    try:
        vals = [int(a) if m.group(1) == "euclidean" else float(a) for a in args]
    except ValueError as exc:
        raise ValueError(f"bad geometry arguments in {spec!r}") from exc
    return GEOMETRIES[m.group(1)](*vals)


def split_spheres_branch(M: MetricFamily, length: float):
    """Equatorial branch with factor speeds ``p L`` and ``q L``."""
    a, b = M.default_lambda
    p, q = M.extras["p"], M.extras["q"]
    x0 = np.array([math.pi / 2, 0.0, math.pi / 2, 0.0])
    v0 = np.array([0.0, p * length / a, 0.0, q * length / b])
    return x0, v0


# -- Christoffel symbols and curvature -----------------------------------------


_W = np.array([wt for _, wt in _STENCIL])


def _offsets(m, h):
    """Stencil displacements, shape (m * 4, m), axis-major."""
    return np.concatenate([np.outer([o for o, _ in _STENCIL], np.eye(m)[a]) * h for a in range(m)])


def _inv_det(g):
    m = g.shape[-1]
    if m == 1:
        det = g[..., 0, 0]
        return 1.0 / np.where(det == 0, 1.0, det)[..., None, None], det
    if m == 2:
        a, b, c, d = g[..., 0, 0], g[..., 0, 1], g[..., 1, 0], g[..., 1, 1]
        det = a * d - b * c
        dd = np.where(det == 0, 1.0, det)
        inv = np.stack([np.stack([d, -b], -1), np.stack([-c, a], -1)], -2) / dd[..., None, None]
        return inv, det
    det = np.linalg.det(g)
    safe = np.where((det == 0)[..., None, None], np.eye(m), g)
    return np.linalg.inv(safe), det


def _christoffel_raw(M, lam, x, h=H_CHRISTOFFEL):
    """Christoffel symbols ``Gam[..., k, i, j]`` plus a per-point singularity flag.

    ``d_a g_bc`` uses the 4th-order central stencil; the metric is evaluated
    once on the centre and all stencil points.
    """
    x = np.asarray(x, dtype=float)
    m = M.manifold_dim
    lam = np.asarray(lam, dtype=float)
    batch = np.broadcast_shapes(x.shape[:-1], lam.shape[:-1])
    off = _offsets(m, h).reshape((4 * m,) + (1,) * len(x.shape[:-1]) + (m,))
    pts = np.concatenate([x[None], x[None] + off])
    G = M.g(lam[None], pts)
    g0 = G[0]
    Gs = G[1:].reshape((m, 4) + batch + (m, m))
    D = np.moveaxis(np.tensordot(_W / (12.0 * h), Gs, axes=([0], [1])), 0, -3)
    ginv, det = _inv_det(g0)
    scale = np.max(np.abs(g0), axis=(-2, -1)) ** m
    bad = ~(np.abs(det) > 1e-12 * np.maximum(scale, 1e-300))
    T = D + np.swapaxes(D, -3, -2) - np.moveaxis(D, -3, -1)  # [i, j, l]
    Gam = np.matmul(T.reshape(batch + (m * m, m)), np.swapaxes(ginv, -1, -2))  # [(i j), k]
    Gam = 0.5 * np.moveaxis(Gam.reshape(batch + (m, m, m)), -1, -3)
    return Gam, bad


def christoffel(M: MetricFamily, lam, x, h: float = H_CHRISTOFFEL) -> np.ndarray:
    """``Gam^k_ij`` at ``(lam, x)``; array index order ``[k, i, j]``."""
    Gam, bad = _christoffel_raw(M, M.lam(lam), x, h)
    if np.any(bad):
        raise SingularMetric(f"{M.name}: metric is singular at {np.asarray(x)[bad] if np.ndim(bad) else x}")
    return Gam


def _riemann_raw(M, lam, x, h=H_CURVATURE, h_inner=H_CHRISTOFFEL):
    x = np.asarray(x, dtype=float)
    m = M.manifold_dim
    off = _offsets(m, h).reshape((4 * m,) + (1,) * len(x.shape[:-1]) + (m,))
    Gs, bad_s = _christoffel_raw(M, np.asarray(lam)[None], x[None] + off, h_inner)
    batch = Gs.shape[1:-3]
    Gs = Gs.reshape((m, len(_STENCIL)) + batch + (m, m, m))
    w = np.array([wt for _, wt in _STENCIL]) / (12.0 * h)
    P = np.moveaxis(np.tensordot(w, Gs, axes=([0], [1])), 0, -4)  # [..., c, a, d, b] = d_c Gam^a_db
    Gam, bad = _christoffel_raw(M, lam, x, h_inner)
    R = (np.einsum("...cadb->...abcd", P) - np.einsum("...dacb->...abcd", P)
         + np.einsum("...ace,...edb->...abcd", Gam, Gam)
         - np.einsum("...ade,...ecb->...abcd", Gam, Gam))
    bad = bad | np.any(bad_s.reshape((m * len(_STENCIL),) + batch), axis=0)
    return R, bad


def bianchi_defect(R: np.ndarray) -> float:
    """max |R^a_bcd + R^a_cdb + R^a_dbc| relative to ``1 + max |R|``."""
    cyc = R + np.einsum("...acdb->...abcd", R) + np.einsum("...adbc->...abcd", R)
    return float(np.max(np.abs(cyc)) / (1.0 + np.max(np.abs(R))))


def riemann_curvature(M: MetricFamily, lam, x, h: float = H_CURVATURE,
                      check: bool = True) -> np.ndarray:
    """Curvature tensor ``R[..., a, b, c, d] = R^a_bcd``.

    ``R(u, v) w = R^a_bcd w^b u^c v^d`` (apply with :func:`curvature_operator`).
    With ``check`` the first Bianchi identity is verified to ``1e-4``.
    """
    R, bad = _riemann_raw(M, M.lam(lam), x, h)
    if np.any(bad):
        raise SingularMetric(f"{M.name}: metric is singular near the sample points")
    if check:
        d = bianchi_defect(R)
        if d > BIANCHI_TOL:
            raise CurvatureCheckFailed(f"first Bianchi identity violated by {d:.2e}")
    return R


def curvature_operator(R, u, v, w) -> np.ndarray:
    return np.einsum("...abcd,...b,...c,...d->...a", R, w, u, v)


def sectional_curvature(M: MetricFamily, lam, x, u, v) -> float:
    lam = M.lam(lam)
    g = M.g(lam, x)
    R = riemann_curvature(M, lam, x)
    num = np.einsum("...a,...ab,...b", curvature_operator(R, u, v, v), g, u)
    den = (np.einsum("...a,...ab,...b", u, g, u) * np.einsum("...a,...ab,...b", v, g, v)
           - np.einsum("...a,...ab,...b", u, g, v) ** 2)
    return num / den


# -- geodesic integration --------------------------------------------------------


def _rhs(M, lam, y, m):
    """Geodesic + parallel transport vector field; ``y = (x, x', E)``."""
    n = len(y)
    x, xd = y[:, :m], y[:, m:2 * m]
    E = y[:, 2 * m:].reshape(n, m, m)
    Gam, bad = _christoffel_raw(M, lam, x)
    Gx = np.matmul(np.swapaxes(Gam, -1, -2), xd[:, None, :, None])[..., 0]  # [n, k, j]
    xdd = -np.matmul(Gx, xd[:, :, None])[..., 0]
    Ed = -np.matmul(Gx, E)
    return np.concatenate([xd, xdd, Ed.reshape(n, -1)], axis=1), bad


def _rk4_pair(M, lam, y, h, m):
    """One RK4 step of size ``h`` and two of size ``h/2``, stages batched together."""
    n = len(y)
    lam2 = np.concatenate([lam, lam])
    k1, b1 = _rhs(M, lam, y, m)
    hh = np.concatenate([h, 0.5 * h])
    yy = np.concatenate([y, y])
    kk1 = np.concatenate([k1, k1])
    k2, b2 = _rhs(M, lam2, yy + 0.5 * hh * kk1, m)
    k3, b3 = _rhs(M, lam2, yy + 0.5 * hh * k2, m)
    k4, b4 = _rhs(M, lam2, yy + hh * k3, m)
    out = yy + hh / 6.0 * (kk1 + 2 * k2 + 2 * k3 + k4)
    bad = b1 | (b2 | b3 | b4)[:n] | (b2 | b3 | b4)[n:]
    full, half = out[:n], out[n:]
    hm = 0.5 * h
    l1, c1 = _rhs(M, lam, half, m)
    l2, c2 = _rhs(M, lam, half + 0.5 * hm * l1, m)
    l3, c3 = _rhs(M, lam, half + 0.5 * hm * l2, m)
    l4, c4 = _rhs(M, lam, half + hm * l3, m)
    two = half + hm / 6.0 * (l1 + 2 * l2 + 2 * l3 + l4)
    return full, two, bad | c1 | c2 | c3 | c4


def _integrate(M, lam, y0, out_times, tol=STEP_TOL, max_iter=200000):
    """Batched RK4 with per-trajectory step doubling.

    Every trajectory gets its own step size; the local error estimate
    ``|y_(2 x h/2) - y_h| / 15`` is kept below ``tol * h * (1 + |y|)``.  Steps
    are clipped to land on ``out_times``.  Returns the samples, the exit time
    of each trajectory (NaN if it stayed in the chart) and the step counts.
    """
    m = M.manifold_dim
    B = y0.shape[0]
    K = len(out_times)
    Y = np.full((K, B, y0.shape[1]), np.nan)
    Y[0] = y0
    y = y0.copy()
    t = np.zeros(B)
    nxt = np.ones(B, dtype=int)
    speed = np.linalg.norm(y0[:, m:2 * m], axis=1)
    h = np.minimum(0.05, 0.05 / (1.0 + speed))
    exit_time = np.full(B, np.nan)
    steps = np.zeros(B, dtype=int)
    active = np.ones(B, dtype=bool)
    if K == 1:
        return Y, exit_time, steps
    for _ in range(max_iter):
        idx = np.nonzero(active)[0]
        if idx.size == 0:
            break
        ya, ta, ha = y[idx], t[idx], h[idx]
        target = out_times[nxt[idx]]
        he = np.minimum(ha, target - ta)
        la = lam[idx]
        full, two, bad_ = _rk4_pair(M, la, ya, he[:, None], m)
        err = np.max(np.abs(two - full), axis=1) / 15.0 / (1.0 + np.max(np.abs(two), axis=1))
        finite = np.all(np.isfinite(two), axis=1)
        ok = (err <= tol * he) & finite & ~bad_
        # grow / shrink the nominal step
        fac = np.where(err > 0, 0.9 * (tol * he / np.maximum(err, 1e-300)) ** 0.25, 4.0)
        fac = np.clip(fac, 0.2, 4.0)
        clipped = he < ha
        newh = np.where(ok & clipped, ha, he * fac)
        h[idx] = np.maximum(newh, 1e-12)
        acc = idx[ok]
        y[acc] = two[ok]
        t[acc] = ta[ok] + he[ok]
        steps[acc] += 1
        stuck = idx[~ok & ((he < 1e-11) | ~finite | bad_)]
        for i in stuck:
            exit_time[i] = t[i]
            active[i] = False
        inside = M.in_chart(y[acc, :m])
        for i in acc[~inside]:
            exit_time[i] = t[i]
            active[i] = False
        hit = acc[inside & (np.abs(t[acc] - out_times[nxt[acc]]) <= 1e-14)]
        t[hit] = out_times[nxt[hit]]
        Y[nxt[hit], hit] = y[hit]
        nxt[hit] += 1
        done = hit[nxt[hit] >= K]
        active[done] = False
    else:  # pragma: no cover - runaway integration
        for i in np.nonzero(active)[0]:
            exit_time[i] = t[i]
    return Y, exit_time, steps


def _initial_frames(g0, v):
    """g-orthonormal frames with ``E_0 = v / |v|``, transverse signs sorted descending.

    Returns ``E`` (B, m, m) with columns as frame vectors, ``eps`` (B, m) and a
    flag for null or zero velocities (frame then built from coordinates).
    """
    B, m = v.shape
    gvv = np.einsum("na,nab,nb->n", v, g0, v)
    vnorm = np.linalg.norm(v, axis=1)
    null = np.abs(gvv) <= 1e-12 * np.maximum(vnorm ** 2 * np.max(np.abs(g0), axis=(1, 2)), 1e-300)
    E = np.zeros((B, m, m))
    eps = np.zeros((B, m))
    for n in range(B):
        g = g0[n]
        if null[n]:
            w, Q = np.linalg.eigh(g)
            order = np.argsort(-w, kind="stable")
            F = Q[:, order] / np.sqrt(np.abs(w[order]))
            E[n] = _sign_fix(F)
            eps[n] = np.sign(w[order])
            continue
        e0 = v[n] / math.sqrt(abs(gvv[n]))
        s0 = math.copysign(1.0, gvv[n])
        P = np.eye(m) - s0 * np.outer(e0, g @ e0)
        U, sv, _ = np.linalg.svd(P)
        W = U[:, :m - 1]
        Mt = W.T @ g @ W
        w, Q = np.linalg.eigh(0.5 * (Mt + Mt.T))
        order = np.argsort(-w, kind="stable")
        F = W @ Q[:, order] / np.sqrt(np.abs(w[order]))
        E[n, :, 0] = e0
        E[n, :, 1:] = _sign_fix(F)
        eps[n, 0] = s0
        eps[n, 1:] = np.sign(w[order])
    return E, eps, null


def _sign_fix(F):
    if F.shape[1] == 0:
        return F
    idx = np.argmax(np.abs(F) >= np.abs(F).max(axis=0) - 1e-12, axis=0)
    s = np.sign(F[idx, np.arange(F.shape[1])])
    s[s == 0] = 1.0
    return F * s


@dataclass
class GeodesicRecord:
    lam: np.ndarray
    p: np.ndarray
    v: np.ndarray
    t: np.ndarray
    x: np.ndarray
    xdot: np.ndarray
    frame: np.ndarray
    eps: np.ndarray
    energy_drift: float
    geodesic_residual: float
    frame_residual: float
    steps: int
    null_tangent: bool = False
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def energy(self) -> float:
        return float(self._cache.get("energy", np.nan))

    def to_csv(self) -> str:
        m = self.x.shape[1]
        head = ["t"] + [f"x{i}" for i in range(m)] + [f"v{i}" for i in range(m)]
        rows = [",".join(head)]
        for k in range(len(self.t)):
            vals = [self.t[k], *self.x[k], *self.xdot[k]]
            rows.append(",".join(repr(float(a)) for a in vals))
        return "\n".join(rows) + "\n"


def _d4(y, dt):
    """4th-order derivative estimate on a uniform grid (one-sided at the ends)."""
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * dt)
    c0 = np.array([-25, 48, -36, 16, -3]) / (12 * dt)
    d[0] = np.tensordot(c0, y[:5], axes=1)
    d[1] = np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * dt), y[:5], axes=1)
    d[-1] = -np.tensordot(c0, y[-5:][::-1], axes=1)
    d[-2] = -np.tensordot(np.array([-3, -10, 18, -6, 1]) / (12 * dt), y[-5:][::-1], axes=1)
    return d


def geodesic_shoot(M: MetricFamily, lam, p, v, steps: int = 1024,
                   tol: float = STEP_TOL) -> GeodesicRecord:
    """Geodesic ``t -> exp_p(t v)`` on ``[0, 1]`` sampled at ``steps + 1`` points.

    The integrator is adaptive; ``steps`` only fixes the output grid.
    Raises :class:`ChartExit` when the curve leaves the chart.
    """
    if steps < 8:
        raise ValueError("steps must be at least 8")
    lam = M.lam(lam)
    m = M.manifold_dim
    p = np.asarray(p, dtype=float).reshape(m)
    v = np.asarray(v, dtype=float).reshape(m)
    if not M.in_chart(p):
        raise ChartExit(f"start point {p} is outside the chart", 0.0)
    g0 = M.g(lam, p)
    if abs(np.linalg.det(g0)) <= 1e-12 * np.max(np.abs(g0)) ** m:
        raise SingularMetric(f"{M.name}: singular metric at {p}")
    E0, eps, null = _initial_frames(g0[None], v[None])
    y0 = np.concatenate([p, v, E0[0].ravel()])[None]
    ts = np.linspace(0.0, 1.0, steps + 1)
    Y, exit_time, nsteps = _integrate(M, lam[None], y0, ts, tol)
    if not np.isnan(exit_time[0]):
        raise ChartExit(f"geodesic left the chart (or hit a singular metric) at t={exit_time[0]:.6g}",
                        float(exit_time[0]))
    return _record_from_samples(M, lam, p, v, ts, Y[:, 0], eps[0], bool(null[0]), int(nsteps[0]))


def _record_from_samples(M, lam, p, v, ts, Y, eps, null, nsteps):
    m = M.manifold_dim
    x, xd = Y[:, :m], Y[:, m:2 * m]
    E = Y[:, 2 * m:].reshape(-1, m, m)
    g = M.g(lam, x)
    en = np.einsum("ka,kab,kb->k", xd, g, xd)
    drift = float(np.max(np.abs(en - en[0])))
    Gam, _ = _christoffel_raw(M, lam, x)
    dt = ts[1] - ts[0]
    acc = _d4(xd, dt)
    geo_res = float(np.max(np.abs(acc + np.einsum("kaij,ki,kj->ka", Gam, xd, xd))))
    Ed = _d4(E, dt)
    fr_res = float(np.max(np.abs(Ed + np.einsum("kaij,ki,kjc->kac", Gam, xd, E))))
    rec = GeodesicRecord(lam, p, v, ts, x, xd, E, eps, drift, geo_res, fr_res, nsteps, null)
    rec._cache["energy"] = float(en[0])
    return rec


# -- transverse curvature and Jacobi fields ---------------------------------------


def _transverse_S(M, lam, x, xd, E):
    """``S_ij = g(R(E_i, x')x', E_j)`` on transverse frame columns ``E[..., :, 1:]``."""
    R, bad = _riemann_raw(M, lam, x)
    g = M.g(lam, x)
    Et = E[..., :, 1:]
    RE = np.einsum("...abcd,...b,...ci,...d->...ai", R, xd, Et, xd)
    S = np.einsum("...ai,...ae,...ej->...ij", RE, g, Et)
    return 0.5 * (S + np.swapaxes(S, -1, -2)), bad


def _S_spline(rec: GeodesicRecord, M: MetricFamily):
    sp = rec._cache.get("S_spline")
    if sp is None:
        S, bad = _transverse_S(M, rec.lam, rec.x, rec.xdot, rec.frame)
        if np.any(bad):
            raise SingularMetric("singular metric along the geodesic")
        sp = CubicSpline(rec.t, S, axis=0)
        rec._cache["S_spline"] = sp
        rec._cache["S_max"] = float(np.max(np.linalg.norm(S, ord=2, axis=(-2, -1)))) if S.shape[-1] else 0.0
    return sp


def _jacobi(S_grid, eps_t, h):
    """RK4 for ``X'' = -Eps S X``, ``X(0) = 0``, ``X'(0) = I``.

    ``S_grid[..., 2k]`` are node values, odd entries midpoints (axis 0 is time).
    Returns ``X`` and ``X'`` at the nodes.
    """
    r = S_grid.shape[-1]
    n = (S_grid.shape[0] - 1) // 2
    batch = S_grid.shape[1:-2]
    X = np.zeros(batch + (r, r))
    V = np.zeros(batch + (r, r)) + np.eye(r)
    Xs, Vs = [X], [V]
    Eps = eps_t[..., :, None]

    def acc(S, X):
        return -Eps * (S @ X)

    for k in range(n):
        S0, Sm, S1 = S_grid[2 * k], S_grid[2 * k + 1], S_grid[2 * k + 2]
        k1x, k1v = V, acc(S0, X)
        k2x, k2v = V + 0.5 * h * k1v, acc(Sm, X + 0.5 * h * k1x)
        k3x, k3v = V + 0.5 * h * k2v, acc(Sm, X + 0.5 * h * k2x)
        k4x, k4v = V + h * k3v, acc(S1, X + h * k3x)
        X = X + h / 6 * (k1x + 2 * k2x + 2 * k3x + k4x)
        V = V + h / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)
        Xs.append(X)
        Vs.append(V)
    return np.stack(Xs), np.stack(Vs)


@dataclass
class IndexRecord:
    conjugate_instants: list
    morse_index: Optional[int]
    spectral_index: Optional[int]
    fem_mesh: int
    degenerate: bool
    crossings: list = field(default_factory=list)
    s0: Optional[float] = None
    mesh_stable: Optional[bool] = None

    def to_json(self) -> dict:
        return {
            "conjugate_instants": [{"t": t, "multiplicity": k, "sign_contribution": s}
                                   for t, k, s in self.conjugate_instants],
            "morse_index": self.morse_index,
            "spectral_index": self.spectral_index,
            "fem_mesh": self.fem_mesh,
            "degenerate": self.degenerate,
            "crossings": [{"s": s, "direction": d, "multiplicity": k} for s, d, k in self.crossings],
            "s0": self.s0,
            "mesh_stable": self.mesh_stable,
        }


def _hermite(t, ta, tb, xa, xb, va, vb):
    h = tb - ta
    u = (t - ta) / h
    h00 = 2 * u ** 3 - 3 * u ** 2 + 1
    h10 = u ** 3 - 2 * u ** 2 + u
    h01 = -2 * u ** 3 + 3 * u ** 2
    h11 = u ** 3 - u ** 2
    return h00 * xa + h10 * h * va + h01 * xb + h11 * h * vb


def conjugate_points(rec: GeodesicRecord, M: MetricFamily, lam=None,
                     n_steps: int = 2048, tol: float = CONJ_TOL) -> IndexRecord:
    """Conjugate instants of ``rec`` in ``(0, 1)`` from the matrix Jacobi equation.

    Instants are sign changes of ``det X`` (or dips of its smallest singular
    value) refined by bisection to ``tol``; multiplicity is the number of
    singular values of ``X(t*)`` below ``1e-4`` of the running scale.  For
    Riemannian metrics each instant contributes ``+multiplicity``; for
    indefinite metrics the contribution is left as ``None`` and filled in by
    :func:`spectral_index`.
    """
    r = M.manifold_dim - 1
    if np.allclose(rec.v, 0):
        # constant curve: Jacobi fields are t * X'(0), never conjugate
        return IndexRecord([], 0 if M.signature == 0 else None, None, 0, False)
    if rec.null_tangent:
        raise TangentialDegeneracy("tangent is null; no transverse reduction")
    eps_t = rec.eps[1:]
    if r == 0:
        return IndexRecord([], 0 if M.signature == 0 else None, None, 0, False)
    sp = _S_spline(rec, M)
    h = 1.0 / n_steps
    grid = np.linspace(0.0, 1.0, 2 * n_steps + 1)
    X, V = _jacobi(sp(grid), eps_t, h)
    tn = grid[::2]
    scale = max(float(np.max(np.linalg.norm(X, ord=2, axis=(1, 2)))), 1e-300)
    det = np.linalg.det(X)
    smin = np.linalg.svd(X, compute_uv=False)[:, -1]

    def X_at(t):
        k = min(int(t / h), n_steps - 1)
        return _hermite(t, tn[k], tn[k + 1], X[k], X[k + 1], V[k], V[k + 1])

    found = []
    for k in range(1, n_steps):
        a, b = tn[k], tn[k + 1]
        if det[k] == 0.0:
            found.append(a)
        elif np.sign(det[k]) != np.sign(det[k + 1]) and det[k + 1] != 0.0:
            fa = det[k]
            while b - a > tol * 1e-2:
                mid = 0.5 * (a + b)
                fm = np.linalg.det(X_at(mid))
                if np.sign(fm) == np.sign(fa):
                    a, fa = mid, fm
                else:
                    b = mid
            found.append(0.5 * (a + b))
        elif (k + 1 < n_steps and smin[k] < smin[k - 1] and smin[k] <= smin[k + 1]
              and smin[k] < 1e-2 * scale and np.sign(det[k - 1]) == np.sign(det[k + 1])):
            # touching zero without a sign change: even multiplicity
            lo, hi = tn[k - 1], tn[k + 1]
            gr = (math.sqrt(5) - 1) / 2
            for _ in range(80):
                c1, c2 = hi - gr * (hi - lo), lo + gr * (hi - lo)
                s1 = np.linalg.svd(X_at(c1), compute_uv=False)[-1]
                s2 = np.linalg.svd(X_at(c2), compute_uv=False)[-1]
                if s1 < s2:
                    hi = c2
                else:
                    lo = c1
            tc = 0.5 * (lo + hi)
            if np.linalg.svd(X_at(tc), compute_uv=False)[-1] < tol * scale:
                found.append(tc)
    instants = []
    for tc in sorted(found):
        if tc >= 1.0 - tol:
            continue
        sv = np.linalg.svd(X_at(tc), compute_uv=False)
        mult = max(1, int(np.count_nonzero(sv < 1e-4 * scale)))
        if instants and abs(instants[-1][0] - tc) < 10 * tol:
            continue
        instants.append((float(tc), mult, mult if M.signature == 0 else None))
    s_end = np.linalg.svd(X[-1], compute_uv=False)
    degenerate = bool(s_end[-1] < tol * scale) or any(t >= 1.0 - tol for t in found)
    morse = sum(k for _, k, _ in instants) if M.signature == 0 else None
    rec._cache["jacobi_scale"] = scale
    return IndexRecord(instants, morse, None, 0, degenerate)


# -- finite-element second variation -------------------------------------------------


_CHOL_CACHE: dict = {}


def _stiffness_chol_inv(n: int) -> np.ndarray:
    """Inverse Cholesky factor of the H^1_0 Gram matrix of ``n`` elements."""
    inv = _CHOL_CACHE.get(n)
    if inv is None:
        h = 1.0 / n
        T = (np.diag(np.full(n - 1, 2.0)) - np.diag(np.ones(n - 2), 1) - np.diag(np.ones(n - 2), -1)) / h
        C = cholesky(T, lower=True)
        inv = solve_triangular(C, np.eye(n - 1), lower=True)
        _CHOL_CACHE[n] = inv
    return inv


def _fem_matrix(S_q, eps_t, s, n):
    """Assemble ``Eps x T - s^2 Q`` (component-major) from S at 2n+1 Simpson nodes.

    ``S_q`` has shape (2n+1, ..., r, r); returns (..., r(n-1), r(n-1)).
    """
    h = 1.0 / n
    r = S_q.shape[-1]
    Sn = S_q[0::2]          # element ends, n+1
    Sm = S_q[1::2]          # midpoints, n
    diag = h / 6.0 * (2 * Sn[1:-1] + Sm[:-1] + Sm[1:])  # (n-1, ..., r, r)
    off = h / 6.0 * Sm[1:-1]                             # (n-2, ..., r, r)
    batch = S_q.shape[1:-2]
    Q = np.zeros(batch + (r, n - 1, r, n - 1))
    k = np.arange(n - 1)
    # mixed advanced indexing puts the node axis first, matching diag / off
    Q[..., :, k, :, k] = diag
    if n > 2:
        Q[..., :, k[:-1], :, k[1:]] = off
        Q[..., :, k[1:], :, k[:-1]] = off
    T = (2 * np.eye(n - 1) - np.eye(n - 1, k=1) - np.eye(n - 1, k=-1)) / h
    Q = Q.reshape(batch + (r * (n - 1), r * (n - 1)))
    A = np.kron(np.diag(eps_t), T) - s * s * Q
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def _riesz(A, n, r):
    Ci = _stiffness_chol_inv(n)
    k = n - 1
    batch = A.shape[:-2]
    blocks = A.reshape(batch + (r, k, r, k))
    L = np.einsum("ab,...ibjc,dc->...iajd", Ci, blocks, Ci, optimize=True) if r > 1 else \
        (Ci @ A @ Ci.T)[..., None, :, None, :]
    L = L.reshape(A.shape)
    return 0.5 * (L + np.swapaxes(L, -1, -2))


def second_variation_fem(rec: GeodesicRecord, M: MetricFamily, lam=None, s: float = 1.0,
                         mesh_n: int = 200, riesz: bool = True) -> SymmetricMatrix:
    """Second variation of ``t -> gamma(s t)`` on ``(m - 1)(mesh_n - 1)`` hat functions.

    Unknowns are ordered component-major, so the sign blocks of ``Eps`` are
    contiguous.  With ``riesz`` the form is returned as the operator
    ``C^-1 A C^-T`` where ``C C^T`` is the H^1_0 Gram matrix; otherwise the
    raw stiffness-minus-curvature matrix ``A``.
    """
    if mesh_n < 16:
        raise ValueError("mesh_n must be at least 16")
    if not 0.0 < s <= 1.0:
        raise ValueError("s must lie in (0, 1]")
    r = M.manifold_dim - 1
    if r == 0:
        raise TangentialDegeneracy("one-dimensional manifold has no transverse directions")
    sp = _S_spline(rec, M)
    S_q = sp(s * np.linspace(0.0, 1.0, 2 * mesh_n + 1))
    A = _fem_matrix(S_q, rec.eps[1:], s, mesh_n)
    return SymmetricMatrix(_riesz(A, mesh_n, r) if riesz else A)


def _s0(rec, M, conj: IndexRecord) -> float:
    s0 = 0.05
    if conj.conjugate_instants:
        s0 = min(s0, 0.5 * conj.conjugate_instants[0][0])
    _S_spline(rec, M)
    smax = rec._cache["S_max"]
    if smax > 0:
        # keeps s^2 |S| / pi^2 <= 1/2, so L_s0 has the sign pattern of Eps
        s0 = min(s0, math.pi * math.sqrt(0.5 / smax))
    return s0


def _neg_eps(eps_t, n):
    return int(np.count_nonzero(eps_t < 0)) * (n - 1)


def spectral_index(rec: GeodesicRecord, M: MetricFamily, lam=None, mesh_n: int = 200,
                   gap: float = DEFAULT_GAP, check_refinement: bool = False,
                   n_init: int = 32) -> IndexRecord:
    """``-sfl`` of ``s -> second_variation_fem(s)``, ``s`` from ``s0`` to 1.

    Conjugate instants from :func:`conjugate_points` are matched with the FEM
    crossings; for indefinite metrics their sign contributions are read off
    the crossing directions.
    """
    conj = conjugate_points(rec, M, lam)
    conj.fem_mesh = mesh_n
    if conj.degenerate:
        conj.spectral_index = None
        return conj
    r = M.manifold_dim - 1
    if r == 0 or np.allclose(rec.v, 0):
        conj.spectral_index = 0
        return conj
    s0 = _s0(rec, M, conj)
    conj.s0 = s0
    L0 = second_variation_fem(rec, M, lam, s0, mesh_n)
    w0 = np.linalg.eigvalsh(L0.entries)
    if np.min(np.abs(w0)) < gap or np.count_nonzero(w0 < 0) != _neg_eps(rec.eps[1:], mesh_n):
        raise DegenerateEndpoint(f"second variation at s0={s0:.3g} lacks the essential sign pattern",
                                 float(np.min(np.abs(w0))))

    def sampler(u):
        return second_variation_fem(rec, M, lam, s0 + u * (1.0 - s0), mesh_n)

    res = sfl_crossings(OperatorPath(sampler, DENSE, gap), n_init=n_init, tol=1e-6, gap=gap)
    conj.spectral_index = -res.value
    conj.crossings = [(s0 + u * (1.0 - s0), d, k) for u, d, k in res.crossings]
    inst = []
    for tc, k, sgn in conj.conjugate_instants:
        if sgn is None:
            near = [c for c in conj.crossings if abs(c[0] - tc) < 2e-2]
            if near:
                c = min(near, key=lambda c: abs(c[0] - tc))
                sgn = -c[1] * c[2]
        inst.append((tc, k, sgn))
    conj.conjugate_instants = inst
    if check_refinement:
        fine = second_variation_fem(rec, M, lam, 1.0, 2 * mesh_n).entries
        coarse = second_variation_fem(rec, M, lam, 1.0, mesh_n).entries
        idx_f = int(np.count_nonzero(np.linalg.eigvalsh(fine) < 0)) - _neg_eps(rec.eps[1:], 2 * mesh_n)
        idx_c = int(np.count_nonzero(np.linalg.eigvalsh(coarse) < 0)) - _neg_eps(rec.eps[1:], mesh_n)
        conj.mesh_stable = idx_f == idx_c == conj.spectral_index
    return conj


# -- trivial branches and family scans -----------------------------------------------


@dataclass(frozen=True)
class BranchSpec:
    """Trivial branch of geodesics over a parameter chart.

    ``map(points)`` takes chart points (B, d) and returns ``(lam, p, v)``
    arrays of shapes (B, k), (B, m), (B, m).
    """

    name: str
    metric: MetricFamily
    map: Callable
    chart: ParameterChart
    basepoint: tuple = None
    mesh_n: int = 64


def sphere_tm_spec(n_radius: int = 128, n_angle: int = 128, radius: float = 1.0) -> BranchSpec:
    """``exp_p(t v)`` on the round sphere, ``v`` in polar form around an equator point.

    Directions are offset by half an angular cell so no sample shoots
    straight through a pole of the chart.
    """
    M = round_sphere(radius)
    chart = ParameterChart([(0.1, 4 * math.pi), (0.0, 2 * math.pi)], [n_radius, n_angle],
                           (False, True))
    off = math.pi / n_angle

    def mp(pts):
        B = len(pts)
        speed, ang = pts[:, 0], pts[:, 1] + off
        lam = np.full((B, 1), radius)
        p = np.tile([math.pi / 2, 0.0], (B, 1))
        v = np.stack([speed * np.cos(ang), speed * np.sin(ang)], axis=1) / radius
        return lam, p, v

    return BranchSpec("sphere-tm", M, mp, chart, (0, 0), 64)


def ellipsoid_spec(n_c: int = 64, n_len: int = 64) -> BranchSpec:
    """Equator of the spheroid with axis ratio ``c`` traversed with length ``L``."""
    M = ellipsoid_revolution()
    chart = ParameterChart([(0.5, 2.0), (0.5, 7.0)], [n_c, n_len])

    def mp(pts):
        B = len(pts)
        lam = pts[:, :1].copy()
        p = np.tile([math.pi / 2, 0.0], (B, 1))
        v = np.stack([np.zeros(B), pts[:, 1]], axis=1)
        return lam, p, v

    return BranchSpec("ellipsoid", M, mp, chart, (0, 0), 64)


def flat_torus_spec(n: int = 16) -> BranchSpec:
    M = flat_torus()
    chart = ParameterChart([(0.5, 6.0), (0.0, 2 * math.pi)], [n, n], (False, True))

    def mp(pts):
        B = len(pts)
        lam = np.zeros((B, 0))
        p = np.zeros((B, 2))
        v = np.stack([pts[:, 0] * np.cos(pts[:, 1]), pts[:, 0] * np.sin(pts[:, 1])], axis=1)
        return lam, p, v

    return BranchSpec("flat-torus", M, mp, chart, (0, 0), 32)


BRANCHES = {"sphere-tm": sphere_tm_spec, "ellipsoid": ellipsoid_spec, "flat-torus": flat_torus_spec}


class GeodesicField(NodeField):
    """Per-node spectral index of a trivial branch (bridge identity for edges)."""

    def __init__(self, spec: BranchSpec, chart: Optional[ParameterChart] = None,
                 mesh_n: Optional[int] = None, gap: float = DEFAULT_GAP, tol: float = STEP_TOL,
                 chunk: int = 2048, threads: int = 1):
        self.spec = spec
        self.chart = chart or spec.chart
        self.mesh_n = mesh_n or spec.mesh_n
        self.gap = gap
        M = spec.metric
        shape = self.chart.shape
        nodes = list(self.chart.nodes())
        pts = np.array([self.chart.point(i) for i in nodes])
        lam, p, v = spec.map(pts)
        n = self.mesh_n
        ts = np.linspace(0.0, 1.0, 2 * n + 1)
        chunks = [slice(i, min(i + chunk, len(nodes))) for i in range(0, len(nodes), chunk)]

        def work(sl):
            return _scan_chunk(M, lam[sl], p[sl], v[sl], ts, n, gap, tol)

        if threads > 1:
            with ThreadPoolExecutor(threads) as ex:
                parts = list(ex.map(work, chunks))
        else:
            parts = [work(sl) for sl in chunks]
        cat = {k: np.concatenate([q[k] for q in parts]) for k in parts[0]}
        self.index = cat["index"].reshape(shape)
        self.margin = cat["margin"].reshape(shape)
        self.kernel_dims = cat["kernel"].reshape(shape)
        self.failed = cat["failed"].reshape(shape)
        self.energy_drift = cat["drift"].reshape(shape)
        self.exit_time = cat["exit"].reshape(shape)
        self.index[self.failed] = 0
        self.margin[self.failed] = np.nan

    def sfl(self, a, axis, k):
        b = self.chart.shift(a, axis, k)
        # bridge identity: sfl along the connecting path = mu(a) - mu(b)
        return int(self.index[a] - self.index[b])

    def segment_points(self, a, axis, k):
        off = [0] * self.chart.ndim
        off[axis] = k
        return self.chart.point(a), self.chart.point(a, off)


def _scan_chunk(M, lam, p, v, ts, n, gap, tol):
    B = len(p)
    m = M.manifold_dim
    r = m - 1
    g0 = M.g(lam, p)
    E0, eps, null = _initial_frames(g0, v)
    y0 = np.concatenate([p, v, E0.reshape(B, -1)], axis=1)
    Y, exit_time, _ = _integrate(M, lam, y0, ts, tol)
    failed = ~np.isnan(exit_time) | null
    Yc = np.where(failed[None, :, None], y0[None], Y)
    x, xd = Yc[..., :m], Yc[..., m:2 * m]
    E = Yc[..., 2 * m:].reshape(len(ts), B, m, m)
    en = np.einsum("kna,knab,knb->kn", xd, M.g(lam[None], x), xd)
    drift = np.max(np.abs(en - en[0]), axis=0)
    S = np.empty((len(ts), B, r, r))
    for k0 in range(0, len(ts), 16):
        S[k0:k0 + 16], bad = _transverse_S(M, lam[None], x[k0:k0 + 16], xd[k0:k0 + 16],
                                             E[k0:k0 + 16])
        failed |= np.any(bad, axis=0)
    eps_t = eps[:, 1:]
    X, _ = _jacobi(S, eps_t, 1.0 / n)
    X1 = X[-1]
    sv = np.linalg.svd(X1, compute_uv=False)
    scale = np.maximum(np.max(np.linalg.norm(X, ord=2, axis=(-2, -1)), axis=0), 1e-300)
    conj_kernel = np.count_nonzero(sv < CONJ_TOL * scale[:, None], axis=1)
    A = _fem_matrix(S, eps_t, 1.0, n)
    w = np.linalg.eigvalsh(_riesz(A, n, r))
    margin = np.min(np.abs(w), axis=1)
    fem_kernel = np.count_nonzero(np.abs(w) < gap, axis=1)
    neg0 = np.count_nonzero(eps_t < 0, axis=1) * (n - 1)
    index = np.count_nonzero(w < 0, axis=1) - neg0
    return {"index": index, "margin": margin, "kernel": np.maximum(conj_kernel, fem_kernel),
            "failed": failed, "drift": drift, "exit": exit_time}


def geodesic_family_scan(spec: BranchSpec, chart: Optional[ParameterChart] = None,
                         basepoint=None, mode: str = "fast", mesh_n: Optional[int] = None,
                         gap: float = DEFAULT_GAP, threads: int = 1) -> ScanResult:
    """Spectral index over a chart of trivial-branch geodesics and the induced ``B_sigma`` mask.

    Edge spectral flows are index differences (bridge identity); masking,
    components and labels are those of :mod:`parameter_scan`.  Nodes whose
    geodesic leaves the chart are marked failed and excluded.
    """
    field_ = GeodesicField(spec, chart, mesh_n, gap, threads=threads)
    bp = spec.basepoint if basepoint is None else basepoint
    if mode == "confirm":
        def confirm(pa, pb):
            return True  # every index jump certifies a bifurcation point for geodesics
    else:
        confirm = None
    res = run_scan(field_, tuple(bp) if not isinstance(bp, tuple) else bp, mode, confirm)
    comps = res.components
    index_labels = {}
    for cid in res.component_index:
        vals = np.unique(field_.index[(comps == cid) & ~field_.failed])
        index_labels[cid] = [int(x) for x in vals]
    res.extra.update({
        "branch": spec.name,
        "geometry": spec.metric.name,
        "fem_mesh": field_.mesh_n,
        "component_spectral_index": {str(k): (v[0] if len(v) == 1 else v) for k, v in index_labels.items()},
        "distinct_spectral_indices": sorted({x for v in index_labels.values() for x in v}),
        "max_energy_drift": float(np.nanmax(np.where(field_.failed, np.nan, field_.energy_drift)))
        if not np.all(field_.failed) else None,
    })
    res.index_grid = field_.index
    return res
