import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.interpolate import CubicSpline

from specflow.errors import (
    DegenerateOperator,
    EndpointDegenerateInHomotopy,
    EndpointMismatch,
    MismatchedJ,
    UnresolvedCrossing,
)
from specflow.operator_core import SignCompactOperator, SymmetricMatrix
from specflow.spectral_flow import (
    DENSE,
    SIGN_COMPACT,
    OperatorPath,
    cogredient,
    concatenate,
    constant_path,
    homotopy_check,
    krasnoselskii_path,
    linear_path,
    path_from_json,
    path_to_json,
    reparameterize,
    reverse,
    sampled_path,
    sfl_crossings,
    sfl_endpoint,
)

from conftest import inertia, random_invertible, random_symmetric


def diag_path(f):
    return OperatorPath(lambda t: SymmetricMatrix(np.diag(f(t))), DENSE)


def test_single_downward_crossing():
    res = sfl_crossings(diag_path(lambda t: [1 - 2 * t, 1.0]))
    assert res.value == -1
    assert len(res.crossings) == 1
    t, d, m = res.crossings[0]
    assert abs(t - 0.5) < 1e-6 and d == -1 and m == 1
    assert res.value == sum(d * m for _, d, m in res.crossings)


def test_constant_path_zero():
    op = SymmetricMatrix(np.diag([2.0, -1.0, 3.0]))
    p = constant_path(op)
    assert sfl_crossings(p).value == 0
    S = SignCompactOperator(np.array([1.0, -1.0]), SymmetricMatrix(np.zeros((2, 2))), True, True)
    assert sfl_endpoint(constant_path(S)).value == 0


@pytest.mark.parametrize("n", range(1, 9))
def test_krasnoselskii_path_definition_value(n):
    # sfl = mu_Morse(L_0) - mu_Morse(L_1) = 0 - n; the value mu_rel(id+K_n, id) = n is the
    # same number with the endpoints swapped (see the decisions ledger)
    p = krasnoselskii_path(n)
    assert sfl_crossings(p).value == -n
    assert sfl_endpoint(p).value == -n
    assert sfl_endpoint(reverse(p)).value == n
    assert sfl_crossings(reverse(p)).value == n
    oracle = inertia(p.window(0.0)) - inertia(p.window(1.0))
    assert oracle == -n


def test_endpoint_on_dense_path_is_morse_difference():
    p = diag_path(lambda t: [1 - 2 * t, 1 - 4 * t, -1.0])
    assert sfl_endpoint(p).value == -2 == inertia(p.window(0)) - inertia(p.window(1))


def test_degenerate_endpoint_rejected():
    with pytest.raises(DegenerateOperator):
        sfl_crossings(diag_path(lambda t: [t, 1.0]))


def test_unresolved_crossing_on_degenerate_arc():
    # eigenvalue identically zero on [0.4, 0.6]
    def f(t):
        if t < 0.4:
            return [0.4 - t, 1.0]
        if t > 0.6:
            return [0.6 - t, 1.0]
        return [0.0, 1.0]
    with pytest.raises(UnresolvedCrossing) as ei:
        sfl_crossings(diag_path(f))
    a, b = ei.value.interval
    assert 0.35 <= a <= b <= 0.65


def test_double_crossing_and_collision():
    # two eigenvalues cross zero at the same t: multiplicity 2
    res = sfl_crossings(diag_path(lambda t: [1 - 2 * t, 0.5 - t, 3.0]))
    assert res.value == -2
    assert sum(m for _, _, m in res.crossings) == 2
    # a touch without sign change counts nothing
    res = sfl_crossings(diag_path(lambda t: [(t - 0.3) ** 2 + 1e-3, -1.0]))
    assert res.value == 0


def test_concatenate_examples():
    p = krasnoselskii_path(3)
    q = constant_path(p(1.0))
    assert sfl_endpoint(concatenate(p, q)).value == sfl_endpoint(p).value
    assert sfl_crossings(concatenate(p, reverse(p))).value == 0
    with pytest.raises(EndpointMismatch):
        concatenate(p, p)


def test_concatenate_gamma_m_then_gamma_n():
    m, n = 2, 5
    pm = krasnoselskii_path(m, window=n)
    pn = krasnoselskii_path(n, window=n)
    second = sampled_path([0.0, 1.0], [pm(1.0), pn(1.0)])
    joined = concatenate(pm, second)
    oracle = inertia(joined.window(0.0)) - inertia(joined.window(1.0))
    parts = sfl_crossings(pm).value + sfl_crossings(second).value
    assert parts == sfl_crossings(joined).value == oracle == -n


def test_double_reverse_identity():
    p = krasnoselskii_path(2)
    rr = reverse(reverse(p))
    for t in (0.0, 0.25, 0.5, 0.75, 1.0):
        assert np.array_equal(rr.window(t), p.window(t))


def test_homotopy_examples(rng):
    const = homotopy_check(lambda s, t: SymmetricMatrix(np.diag([1 - 2 * t, 1.0])), n_s=5)
    assert const.consistent and const.value == -1
    n = 3
    B = random_symmetric(rng, 2 * n)
    B *= 0.5 / np.linalg.norm(B, 2)
    base = krasnoselskii_path(n)

    def h(s, t):
        op = base(t)
        return SignCompactOperator(op.j_window, SymmetricMatrix(op.k_window.entries + s * t * (1 - t) * B),
                                   op.tail_plus, op.tail_minus)
    rep = homotopy_check(h, n_s=9, kind=SIGN_COMPACT)
    assert rep.consistent and rep.value == -n
    phi1, phi2 = (lambda t: t * t), (lambda t: np.sqrt(t))
    rep = homotopy_check(lambda s, t: base((1 - s) * phi1(t) + s * phi2(t)), n_s=5, kind=SIGN_COMPACT)
    assert rep.consistent


def test_homotopy_degenerate_slice():
    with pytest.raises(EndpointDegenerateInHomotopy):
        homotopy_check(lambda s, t: SymmetricMatrix(np.diag([1 - s, 1.0])), n_s=3)


def test_sampled_path_validation():
    with pytest.raises(ValueError):
        sampled_path([0.0, 0.5], [np.eye(2), np.eye(2)])
    S = SignCompactOperator(np.array([1.0]), SymmetricMatrix([[0.0]]), True, False)
    with pytest.raises(MismatchedJ):
        sampled_path([0.0, 1.0], [S, np.eye(1)])


def test_path_json_round_trip(tmp_path):
    p = krasnoselskii_path(3)
    obj = path_to_json(p, [0.0, 0.5, 1.0])
    text = json.dumps(obj)
    q = path_from_json(text)
    assert q.kind == SIGN_COMPACT
    assert sfl_endpoint(q).value == sfl_endpoint(p).value
    for t in (0.0, 0.25, 0.75, 1.0):
        assert np.allclose(q.window(t), p.window(t))


def test_reparameterization_invariance():
    p = krasnoselskii_path(4)
    assert sfl_crossings(reparameterize(p, lambda t: t ** 3)).value == -4


# -- property suite -------------------------------------------------------------


def random_dense_path(r, n):
    knots = np.linspace(0, 1, 5)
    mats = [random_symmetric(r, n) for _ in knots]
    mats[0], mats[-1] = random_invertible(r, n, 1e-2), random_invertible(r, n, 1e-2)
    spl = CubicSpline(knots, np.stack(mats), axis=0)
    return OperatorPath(lambda t: SymmetricMatrix(spl(t)), DENSE)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_reversal_antisymmetry(n, seed):
    p = random_dense_path(np.random.default_rng(seed), n)
    assert sfl_crossings(reverse(p)).value == -sfl_crossings(p).value


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_concatenation_additivity(n, seed):
    r = np.random.default_rng(seed)
    p = random_dense_path(r, n)
    end = p.window(1.0)
    q_knots = [end, random_invertible(r, n, 1e-2)]
    q = sampled_path([0.0, 1.0], q_knots)
    assert sfl_crossings(concatenate(p, q)).value == sfl_crossings(p).value + sfl_crossings(q).value


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_cogredience_invariance(n, seed):
    r = np.random.default_rng(seed)
    p = random_dense_path(r, n)
    A, B = r.standard_normal((n, n)), r.standard_normal((n, n))
    # M_t = expm-free invertible family: I + small rotation-free perturbation
    M = lambda t: np.eye(n) + 0.3 * ((1 - t) * A + t * B) / max(1.0, np.linalg.norm(A, 2), np.linalg.norm(B, 2))
    assert sfl_crossings(cogredient(p, M)).value == sfl_crossings(p).value


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_sign_compact_methods_agree(n, seed):
    r = np.random.default_rng(seed)
    j = r.choice([-1.0, 1.0], n)
    ops = [SignCompactOperator.from_window(j, random_invertible(r, n, 1e-2), True, True) for _ in range(3)]
    p = sampled_path([0.0, 0.5, 1.0], ops)
    assert sfl_crossings(p).value == sfl_endpoint(p).value
