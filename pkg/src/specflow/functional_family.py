"""Parameterized C^2 functionals with the trivial branch at ``u = 0``.

Families live on a truncated (Galerkin) Hilbert space ``R^galerkin_dim``.
A family whose Hessians are ``J + compact`` in infinite dimensions carries
its sign pattern ``j_window`` and tail flags; otherwise its Hessians are
plain dense matrices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    DegenerateEndpoint,
    NoConvergence,
    NonSymmetricHessian,
    UnknownFamily,
)
from .operator_core import DEFAULT_GAP, SignCompactOperator, SymmetricMatrix
from .spectral_flow import DENSE, SIGN_COMPACT, OperatorPath

EPS = np.finfo(float).eps
SYMMETRY_TOL = 1e-6
TRIVIAL_BRANCH_TOL = 1e-10
WITNESS_TOL = 1e-9


@dataclass(frozen=True)
class FunctionalFamily:
    """``f(lam, u)`` with ``grad_u f(lam, 0) = 0`` for every ``lam``.

    Callbacks must be pure: they may be evaluated concurrently and in any
    order.  Missing ``grad`` / ``hess`` are replaced by central differences.
    """

    name: str
    galerkin_dim: int
    param_dim: int
    energy: Callable[[np.ndarray, np.ndarray], float]
    grad: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    hess: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    j_window: Optional[tuple] = None
    tail_plus: bool = True
    tail_minus: bool = False
    description: str = ""

    @property
    def kind(self) -> str:
        return DENSE if self.j_window is None else SIGN_COMPACT

    def _lam(self, lam) -> np.ndarray:
        lam = np.atleast_1d(np.asarray(lam, dtype=float))
        if lam.shape != (self.param_dim,):
            raise ValueError(f"{self.name}: expected {self.param_dim} parameters, got {lam.shape}")
        return lam

    def gradient(self, lam, u) -> np.ndarray:
        lam, u = self._lam(lam), np.asarray(u, dtype=float)
        if self.grad is not None:
            return np.asarray(self.grad(lam, u), dtype=float)
        h = np.cbrt(EPS) * max(1.0, float(np.linalg.norm(u)))
        g = np.empty_like(u)
        for i in range(u.size):
            e = np.zeros_like(u)
            e[i] = h
            g[i] = (self.energy(lam, u + e) - self.energy(lam, u - e)) / (2 * h)
        return g

    def hessian(self, lam, u) -> np.ndarray:
        """Hessian in ``u``; raises :class:`NonSymmetricHessian` on a failed symmetry check."""
        lam, u = self._lam(lam), np.asarray(u, dtype=float)
        n = u.size
        if self.hess is not None:
            H = np.asarray(self.hess(lam, u), dtype=float)
        elif self.grad is not None:
            h = np.cbrt(EPS) * max(1.0, float(np.linalg.norm(u)))
            H = np.empty((n, n))
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                H[:, j] = (self.grad(lam, u + e) - self.grad(lam, u - e)) / (2 * h)
        else:
            # second differences of the energy need a larger step than cbrt(eps)
            h = EPS ** 0.25 * max(1.0, float(np.linalg.norm(u)))
            f = lambda x: self.energy(lam, x)
            H = np.empty((n, n))
            I = np.eye(n) * h
            for i in range(n):
                for j in range(i, n):
                    H[i, j] = (f(u + I[i] + I[j]) - f(u + I[i] - I[j])
                               - f(u - I[i] + I[j]) + f(u - I[i] - I[j])) / (4 * h * h)
                    H[j, i] = H[i, j]
        asym = float(np.linalg.norm(H - H.T))
        if asym > SYMMETRY_TOL:
            raise NonSymmetricHessian(f"{self.name}: |H - H^T| = {asym:.3e}", asym)
        return 0.5 * (H + H.T)

    def operator_at(self, lam):
        """Hessian at the trivial branch, wrapped in the family's operator kind."""
        H = hessian_at_zero(self, lam)
        if self.j_window is None:
            return H
        return SignCompactOperator.from_window(self.j_window, H.entries, self.tail_plus, self.tail_minus)


def hessian_at_zero(F: FunctionalFamily, lam) -> SymmetricMatrix:
    return SymmetricMatrix(F.hessian(lam, np.zeros(F.galerkin_dim)))


def trivial_branch_residual(F: FunctionalFamily, lams: Sequence) -> float:
    """Largest ``|grad f_lam(0)|`` over the given parameters."""
    zero = np.zeros(F.galerkin_dim)
    return max(float(np.linalg.norm(F.gradient(lam, zero))) for lam in lams)


def segment(a, b) -> Callable[[float], np.ndarray]:
    """Straight parameter path from ``a`` to ``b``."""
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    return lambda t: a + float(t) * (b - a)


def hessian_path(F: FunctionalFamily, gamma: Callable[[float], np.ndarray],
                 gap: float = DEFAULT_GAP) -> OperatorPath:
    """``t -> L_{gamma(t)}`` as an admissible operator path."""
    path = OperatorPath(lambda t: F.operator_at(gamma(t)), F.kind, gap)
    for t, m in zip((0.0, 1.0), path.endpoint_margins()):
        if m < gap:
            raise DegenerateEndpoint(f"{F.name}: Hessian at gamma({t:g}) is degenerate ({m:.3e})", m)
    return path


# -- critical points --------------------------------------------------------


@dataclass
class NewtonResult:
    u: np.ndarray
    residual: float
    iterations: int


def _damped_step(residual_fn, x, d, r0, max_halvings=40):
    step = 1.0
    for _ in range(max_halvings):
        x_new = x + step * d
        r_new = residual_fn(x_new)
        if np.isfinite(r_new) and r_new < r0:
            return x_new, r_new
        step *= 0.5
    return None, r0


def newton_critical_point(F: FunctionalFamily, lam, u0, max_iter: int = 50,
                          tol: float = 1e-12) -> NewtonResult:
    """Damped Newton on ``grad f_lam``; gradient-descent step if the Hessian is singular."""
    u = np.array(u0, dtype=float)
    if not np.all(np.isfinite(u)):
        raise ValueError("initial guess must be finite")
    res = lambda x: float(np.linalg.norm(F.gradient(lam, x)))
    r = res(u)
    best_u, best_r = u.copy(), r
    for it in range(max_iter):
        if r <= tol:
            return NewtonResult(u, r, it)
        g = F.gradient(lam, u)
        H = F.hessian(lam, u)
        d = None
        if np.linalg.cond(H) < 1e14:
            d = np.linalg.solve(H, -g)
        u_new, r_new = (None, r) if d is None else _damped_step(res, u, d, r)
        if u_new is None:
            u_new, r_new = _damped_step(res, u, -g, r)
        if u_new is None:
            break
        u, r = u_new, r_new
        if r < best_r:
            best_u, best_r = u.copy(), r
    if r <= tol:
        return NewtonResult(u, r, max_iter)
    raise NoConvergence(f"{F.name}: no critical point within {max_iter} iterations "
                        f"(residual {best_r:.3e})", best_u, best_r)


# -- bifurcation detection ---------------------------------------------------


@dataclass
class BifurcationRecord:
    t_star: float
    lambda_star: np.ndarray
    kernel_dim: int
    witnesses: list = field(default_factory=list)
    radius_schedule: list = field(default_factory=list)
    status: str = "certified"

    @property
    def certified(self) -> bool:
        return self.status == "certified"

    def to_json(self) -> dict:
        return {
            "t_star": self.t_star,
            "lambda_star": [float(x) for x in self.lambda_star],
            "kernel_dim": self.kernel_dim,
            "status": self.status,
            "radius_schedule": list(self.radius_schedule),
            "witnesses": [{"lambda": [float(x) for x in lam], "norm": float(np.linalg.norm(u)),
                           "grad_residual": float(r)} for lam, u, r in self.witnesses],
        }


def _window_eigs(F, gamma, t):
    return np.linalg.eigh(hessian_at_zero(F, gamma(t)).entries)


def _candidates(F, gamma, n_scan, gap, t_tol, dip_tol):
    ts = np.linspace(0.0, 1.0, n_scan + 1)
    eigs = [np.linalg.eigvalsh(hessian_at_zero(F, gamma(t)).entries) for t in ts]
    margin = np.array([np.min(np.abs(w)) for w in eigs])
    morse = np.array([np.count_nonzero(w < 0) for w in eigs])
    out = []

    def m_at(t):
        w = np.linalg.eigvalsh(hessian_at_zero(F, gamma(t)).entries)
        return np.count_nonzero(w < 0), np.min(np.abs(w))

    for i in range(n_scan):
        a, b = ts[i], ts[i + 1]
        if margin[i] < gap or margin[i + 1] < gap or morse[i] == morse[i + 1]:
            continue
        ma = morse[i]
        while b - a > t_tol:
            m = 0.5 * (a + b)
            mm, marg = m_at(m)
            if marg < gap:
                a = b = m
                break
            if mm == ma:
                a = m
            else:
                b = m
        out.append(0.5 * (a + b))
    for i in range(n_scan + 1):
        if margin[i] < gap:
            out.append(float(ts[i]))
        elif 0 < i < n_scan and margin[i] <= margin[i - 1] and margin[i] <= margin[i + 1] \
                and morse[i - 1] == morse[i] == morse[i + 1]:
            # even-order touch: golden-section on min |eigenvalue|
            a, b = ts[i - 1], ts[i + 1]
            phi = 0.5 * (np.sqrt(5) - 1)
            while b - a > t_tol:
                c, d = b - phi * (b - a), a + phi * (b - a)
                if m_at(c)[1] < m_at(d)[1]:
                    b = d
                else:
                    a = c
            t = 0.5 * (a + b)
            if m_at(t)[1] < dip_tol:
                out.append(t)
    out.sort()
    merged = []
    for t in out:
        if not merged or t - merged[-1] > 2.0 / n_scan:
            merged.append(t)
    return merged


def _branch_point(F, gamma, t0, u0, rho, max_iter=60, tol=1e-13, dt=1e-7):
    """Newton on (u, t) for grad_u f(gamma(t), u) = 0 with |u| = rho."""
    n = u0.size
    x = np.concatenate([u0, [t0]])

    def G(x):
        u, t = x[:n], x[n]
        return np.concatenate([F.gradient(gamma(t), u), [0.5 * (u @ u - rho * rho)]])

    res = lambda x: float(np.linalg.norm(G(x)))
    r = res(x)
    for _ in range(max_iter):
        if r <= tol:
            break
        u, t = x[:n], x[n]
        Jm = np.zeros((n + 1, n + 1))
        Jm[:n, :n] = F.hessian(gamma(t), u)
        Jm[:n, n] = (F.gradient(gamma(t + dt), u) - F.gradient(gamma(t - dt), u)) / (2 * dt)
        Jm[n, :n] = u
        try:
            d = np.linalg.solve(Jm, -G(x))
        except np.linalg.LinAlgError:
            return None
        x_new, r_new = _damped_step(res, x, d, r)
        if x_new is None:
            return None
        x, r = x_new, r_new
    return x if r <= 1e-11 else None


def find_bifurcation_on_path(F: FunctionalFamily, gamma: Callable[[float], np.ndarray],
                             n_scan: int = 256, radii: Sequence[float] = (1e-2, 1e-3, 1e-4),
                             gap: float = DEFAULT_GAP, seed: int = 0, t_tol: float = 1e-6,
                             kernel_tol: float = 1e-4, n_perturb: int = 8,
                             t_window: Optional[float] = None) -> list:
    """Locate degenerate Hessians along ``gamma`` and certify bifurcation there.

    Every candidate ``t*`` (kernel of ``L_{gamma(t*)}``) is probed at each
    radius ``r``: starting from ``u = r/2 * phi`` with ``phi`` a kernel vector
    (and ``n_perturb`` random perturbations of it), Newton solves for a
    critical point of norm ``r/2`` with the path parameter free, which lands
    on the flank of ``t*`` carrying the branch.  A candidate is certified only
    if every radius yields a nonzero critical point, polished at its fixed
    parameter to ``|grad| <= 1e-9``.  Others come back with status
    ``"degenerate-but-no-branch"``.
    """
    radii = [float(r) for r in radii]
    if len(radii) < 3 or any(b >= a for a, b in zip(radii[:-1], radii[1:])):
        raise ValueError("need at least three strictly decreasing radii")
    t_window = 4.0 / n_scan if t_window is None else t_window
    rng = np.random.default_rng(seed)
    records = []
    for t_star in _candidates(F, gamma, n_scan, gap, t_tol, dip_tol=1e-6):
        w, v = _window_eigs(F, gamma, t_star)
        scale = max(1.0, float(np.max(np.abs(w))))
        ker = np.flatnonzero(np.abs(w) <= kernel_tol * scale)
        if ker.size == 0:
            ker = np.array([int(np.argmin(np.abs(w)))])
        basis = v[:, ker]
        seeds = [basis[:, 0], -basis[:, 0]]
        for _ in range(n_perturb):
            c = rng.standard_normal(ker.size)
            s = basis @ c + 0.1 * rng.standard_normal(F.galerkin_dim)
            seeds.append(s / np.linalg.norm(s))
        witnesses = []
        for r in radii:
            rho = 0.5 * r
            found = None
            for phi in seeds:
                x = _branch_point(F, gamma, t_star, rho * phi, rho)
                if x is None or abs(x[-1] - t_star) > t_window:
                    continue
                lam = gamma(x[-1])
                try:
                    nr = newton_critical_point(F, lam, x[:-1], max_iter=20, tol=1e-13)
                except NoConvergence:
                    continue
                norm = float(np.linalg.norm(nr.u))
                if 0.5 * rho < norm <= r and nr.residual <= WITNESS_TOL:
                    found = (np.asarray(lam), nr.u, nr.residual)
                    break
            if found is None:
                break
            witnesses.append(found)
        status = "certified" if len(witnesses) == len(radii) else "degenerate-but-no-branch"
        records.append(BifurcationRecord(float(t_star), np.asarray(gamma(t_star)), int(ker.size),
                                         witnesses, radii, status))
    return sorted(records, key=lambda rec: rec.t_star)


# -- registry ----------------------------------------------------------------


def _quartic_family(name, n, param_dim, window_of, j_window=None, tail_plus=True,
                    tail_minus=False, description=""):
    """``f = 1/2 <L_lam u, u> + 1/4 |u|^4`` with closed-form derivatives."""

    def energy(lam, u):
        return 0.5 * u @ window_of(lam) @ u + 0.25 * (u @ u) ** 2

    def grad(lam, u):
        return window_of(lam) @ u + (u @ u) * u

    def hess(lam, u):
        return window_of(lam) + (u @ u) * np.eye(n) + 2.0 * np.outer(u, u)

    return FunctionalFamily(name, n, param_dim, energy, grad, hess,
                            None if j_window is None else tuple(float(s) for s in j_window),
                            tail_plus, tail_minus, description)


def krasnoselskii(k_diag: Sequence[float] = (1.0, 1 / 2, 1 / 3, 1 / 4)) -> FunctionalFamily:
    """``1/2 <(I - lam K) u, u> + 1/4 |u|^4`` with diagonal compact ``K``."""
    k = np.asarray(k_diag, dtype=float)
    n = k.size
    return _quartic_family("krasnoselskii", n, 1, lambda lam: np.diag(1.0 - lam[0] * k),
                           description="characteristic values 1/k_i are bifurcation points")


def compact_perturbation(dim: int = 8) -> FunctionalFamily:
    """``1/2 <(id + diag(k)) u, u> + 1/4 |u|^4``; the parameter is ``diag(k)``.

    Essentially positive: ``J`` is the identity with a +1 tail.
    """
    return _quartic_family("compact_perturbation", dim, dim, lambda lam: np.diag(1.0 + lam),
                           j_window=np.ones(dim), tail_plus=True, tail_minus=False)


def torus_demo() -> FunctionalFamily:
    """Strongly indefinite family on the torus, independent of the second angle.

    Window ``J = diag(+1, -1)``, both tails present,
    ``L_theta = J + (cos(pi*theta_1) - 1) P_0``.
    """
    j = np.array([1.0, -1.0])

    def window_of(lam):
        w = np.diag(j)
        w[0, 0] += np.cos(np.pi * lam[0]) - 1.0
        return w

    return _quartic_family("torus_demo", 2, 2, window_of, j_window=j, tail_plus=True,
                           tail_minus=True)


def positive_definite(dim: int = 3) -> FunctionalFamily:
    """Hessian ``diag(1 + lam^2, 2, ..., dim)``: never degenerate."""
    base = np.arange(1.0, dim + 1.0)

    def window_of(lam):
        d = base.copy()
        d[0] += lam[0] ** 2
        return np.diag(d)

    return _quartic_family("positive_definite", dim, 1, window_of)


def quadratic(dim: int = 3) -> FunctionalFamily:
    """Purely quadratic ``1/2 <A_lam u, u>`` with ``A_lam = diag(1 + lam^2, 2, ...)``."""
    base = np.arange(1.0, dim + 1.0)

    def A(lam):
        d = base.copy()
        d[0] += lam[0] ** 2
        return np.diag(d)

    return FunctionalFamily("quadratic", dim, 1,
                            lambda lam, u: 0.5 * u @ A(lam) @ u,
                            lambda lam, u: A(lam) @ u,
                            lambda lam, u: A(lam))


_REGISTRY = {
    "krasnoselskii": krasnoselskii,
    "compact_perturbation": compact_perturbation,
    "torus_demo": torus_demo,
    "positive_definite": positive_definite,
    "quadratic": quadratic,
}


def registry(name: str, **kwargs) -> FunctionalFamily:
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnknownFamily(f"unknown family {name!r}; known: {sorted(_REGISTRY)}") from None
    return factory(**kwargs)


def registry_names() -> list:
    return sorted(_REGISTRY)
