import numpy as np
import pytest

from specflow.errors import DegenerateEndpoint, NoConvergence, NonSymmetricHessian, UnknownFamily
from specflow.functional_family import (
    FunctionalFamily,
    find_bifurcation_on_path,
    hessian_at_zero,
    hessian_path,
    newton_critical_point,
    registry,
    registry_names,
    segment,
    trivial_branch_residual,
)
from specflow.spectral_flow import reverse, sfl_crossings, sfl_endpoint

from conftest import inertia


def test_registry_names_and_trivial_branch(rng):
    names = registry_names()
    assert {"krasnoselskii", "torus_demo", "compact_perturbation"} <= set(names)
    for name in names:
        F = registry(name)
        lams = [rng.uniform(-2, 2, F.param_dim) for _ in range(5)]
        assert trivial_branch_residual(F, lams) <= 1e-10
    with pytest.raises(UnknownFamily):
        registry("nope")


@pytest.mark.parametrize("lam", [0.0, 0.7, 2.5])
def test_krasnoselskii_hessian(lam):
    H = hessian_at_zero(registry("krasnoselskii"), [lam]).entries
    assert np.allclose(H, np.diag([1 - lam, 1 - lam / 2, 1 - lam / 3, 1 - lam / 4]), atol=0)


def test_torus_hessian_window():
    F = registry("torus_demo")
    for th in (0.1, 0.5, 0.8):
        H = hessian_at_zero(F, [th, 0.3]).entries
        assert np.allclose(H, np.diag([np.cos(np.pi * th), -1.0]), atol=1e-15)
    assert abs(np.cos(np.pi * 0.5)) < 1e-15


def test_finite_difference_hessian_matches_analytic(rng):
    F = registry("krasnoselskii")
    fd = FunctionalFamily("fd", F.galerkin_dim, 1, F.energy, F.grad)
    fd2 = FunctionalFamily("fd2", F.galerkin_dim, 1, F.energy)
    for _ in range(5):
        lam, u = rng.uniform(0, 4, 1), rng.standard_normal(4) * 0.3
        H = F.hessian(lam, u)
        assert np.linalg.norm(fd.hessian(lam, u) - H) <= 1e-6 * max(1, np.linalg.norm(H))
        assert np.linalg.norm(fd2.hessian(lam, u) - H) <= 1e-5 * max(1, np.linalg.norm(H))
        assert np.allclose(fd2.gradient(lam, u), F.gradient(lam, u), atol=1e-8)


def test_nonsymmetric_hessian_rejected():
    F = FunctionalFamily("bad", 2, 1, lambda l, u: 0.0, hess=lambda l, u: np.array([[1.0, 1.0], [0.0, 1.0]]))
    with pytest.raises(NonSymmetricHessian):
        F.hessian([0.0], np.zeros(2))


def test_hessian_path_morse_and_reversal():
    F = registry("krasnoselskii")
    p = hessian_path(F, segment([0.5], [4.5]))
    assert inertia(p.window(0.0)) == 0
    v = sfl_crossings(p).value
    assert v == inertia(p.window(0)) - inertia(p.window(1)) == -4
    assert sfl_crossings(reverse(p)).value == 4
    with pytest.raises(DegenerateEndpoint):
        hessian_path(F, segment([0.5], [2.0]))


def test_hessian_path_compact_perturbation_gamma_n():
    # gamma_n(t) = t K_n inside the compact-perturbation family
    for n in (1, 3, 5):
        F = registry("compact_perturbation", dim=8)
        K = np.zeros(8)
        K[:n] = -2.0
        p = hessian_path(F, segment(np.zeros(8), K))
        assert sfl_endpoint(p).value == sfl_crossings(p).value == -n


def test_newton_examples():
    F = registry("krasnoselskii")
    r = newton_critical_point(F, [1.5], [0.5, 0, 0, 0])
    assert np.allclose(r.u, [np.sqrt(0.5), 0, 0, 0], atol=1e-12) and r.residual <= 1e-12
    r = newton_critical_point(F, [0.5], [0.1, -0.05, 0.02, 0.01])
    assert np.linalg.norm(r.u) < 1e-12
    Q = registry("quadratic")
    r = newton_critical_point(Q, [0.3], [1.0, 2.0, -3.0], max_iter=1)
    assert np.all(r.u == 0) and r.iterations == 1


def test_newton_no_convergence():
    F = FunctionalFamily("flatline", 1, 1, lambda l, u: float(u[0]), lambda l, u: np.ones(1),
                         lambda l, u: np.zeros((1, 1)))
    with pytest.raises(NoConvergence) as ei:
        newton_critical_point(F, [0.0], [1.0], max_iter=5)
    assert ei.value.residual > 0


def test_krasnoselskii_bifurcation_points():
    F = registry("krasnoselskii")
    recs = find_bifurcation_on_path(F, segment([0.5], [4.5]))
    assert [r.certified for r in recs] == [True] * 4
    assert np.allclose([r.lambda_star[0] for r in recs], [1, 2, 3, 4], atol=1e-3)
    for r in recs:
        assert r.kernel_dim == 1
        norms = [np.linalg.norm(u) for _, u, _ in r.witnesses]
        assert all(n > 0 for n in norms)
        assert all(res <= 1e-9 for _, _, res in r.witnesses)
        assert all(n <= rad for n, rad in zip(norms, r.radius_schedule))
        assert all(a >= 5 * b for a, b in zip(norms, norms[1:]))
        # closed-form branch: |u|^2 = lam*k - 1 on the k-th axis
        k = 1.0 / r.lambda_star[0]
        for lam, u, _ in r.witnesses:
            assert abs(u @ u - (lam[0] * k - 1.0)) < 1e-9


def test_no_bifurcation_without_degeneracy():
    assert find_bifurcation_on_path(registry("positive_definite"), segment([-2.0], [2.0])) == []


def test_torus_one_record_at_half():
    recs = find_bifurcation_on_path(registry("torus_demo"), segment([0.0, 0.3], [1.0, 0.3]))
    assert len(recs) == 1 and recs[0].certified
    assert abs(recs[0].lambda_star[0] - 0.5) < 1e-6
    for lam, u, _ in recs[0].witnesses:
        assert lam[0] > 0.5  # branch s^2 = -cos(pi theta) only exists past 1/2


def test_radii_validation():
    with pytest.raises(ValueError):
        find_bifurcation_on_path(registry("krasnoselskii"), segment([0.5], [1.5]), radii=(1e-2, 1e-3))
