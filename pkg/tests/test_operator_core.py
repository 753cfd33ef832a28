import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from specflow.errors import DegenerateOperator, DimensionMismatch, EigenNonConvergence, MismatchedJ
from specflow.operator_core import (
    EssentialClass,
    SignCompactOperator,
    SymmetricMatrix,
    classify_essential,
    eigendecompose,
    intersection_dim,
    morse_index,
    operator_from_json,
    relative_morse_index,
    relative_morse_index_sc,
)

from conftest import inertia, random_invertible, random_symmetric


def test_symmetrised_at_construction():
    A = SymmetricMatrix([[1.0, 2.0], [0.0, 3.0]])
    assert np.array_equal(A.entries, A.entries.T)
    assert A.entries[0, 1] == 1.0


def test_rejects_nonfinite():
    with pytest.raises(ValueError):
        SymmetricMatrix([[np.nan, 0], [0, 1]])


def test_eigendecompose_diagonal():
    sp = eigendecompose(SymmetricMatrix(np.diag([2.0, -1.0])), 1e-10)
    assert np.allclose(sp.eigenvalues, [-1, 2])


def test_eigendecompose_swap_vectors():
    sp = eigendecompose(SymmetricMatrix([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(sp.eigenvalues, [-1, 1])
    s = 1 / np.sqrt(2)
    assert np.allclose(sp.eigenvectors[:, 0], [s, -s])
    assert np.allclose(sp.eigenvectors[:, 1], [s, s])


def test_eigendecompose_reconstruction(rng):
    A = random_symmetric(rng, 8)
    sp = eigendecompose(SymmetricMatrix(A))
    Q, w = sp.eigenvectors, sp.eigenvalues
    assert np.linalg.norm(Q @ np.diag(w) @ Q.T - A) <= 1e-10 * np.linalg.norm(A, 2) * 10
    assert np.all(np.diff(w) >= 0)
    assert np.allclose(Q.T @ Q, np.eye(8), atol=1e-10)
    for k in range(8):
        assert np.linalg.norm(A @ Q[:, k] - w[k] * Q[:, k]) <= sp.residual + 1e-15


def test_eigendecompose_non_convergence_is_reported():
    rng = np.random.default_rng(1)
    A = SymmetricMatrix(random_symmetric(rng, 40))
    with pytest.raises(EigenNonConvergence) as ei:
        eigendecompose(A, tol=1e-300)
    assert ei.value.residual > 0
    with pytest.raises(ValueError):
        eigendecompose(A, tol=0.0)


def test_sign_convention_deterministic(rng):
    A = SymmetricMatrix(random_symmetric(rng, 6))
    V = eigendecompose(A).eigenvectors
    for k in range(6):
        i = np.argmax(np.abs(V[:, k]))
        assert V[i, k] > 0


def test_morse_index_examples():
    assert morse_index(SymmetricMatrix(np.diag([-1.0, -2.0, 3.0]))) == 2
    assert morse_index(SymmetricMatrix(np.eye(5))) == 0


@pytest.mark.parametrize("n", range(1, 9))
def test_morse_index_krasnoselskii_operator(n):
    d = np.ones(2 * n)
    d[:n] -= 2.0
    assert morse_index(SymmetricMatrix(np.diag(d))) == n


def test_morse_index_degenerate():
    with pytest.raises(DegenerateOperator) as ei:
        morse_index(SymmetricMatrix(np.diag([1.0, 1e-12])))
    assert ei.value.min_abs_eigenvalue < 1e-8


def test_relative_morse_examples():
    assert relative_morse_index(SymmetricMatrix(np.diag([-1.0, 1.0])), SymmetricMatrix(np.eye(2))) == 1
    S = SymmetricMatrix(np.diag([3.0, -2.0, 1.0]))
    assert relative_morse_index(S, S) == 0


def test_relative_morse_dim_mismatch():
    with pytest.raises(DimensionMismatch):
        relative_morse_index(SymmetricMatrix(np.eye(2)), SymmetricMatrix(np.eye(3)))


def test_relative_morse_random_pairs_match_inertia_oracle(rng):
    for _ in range(100):
        n = int(rng.integers(1, 13))
        S, T = random_invertible(rng, n), random_invertible(rng, n)
        assert relative_morse_index(S, T) == inertia(S) - inertia(T)


def test_intersection_dim_of_coordinate_planes():
    I = np.eye(4)
    assert intersection_dim(I[:, :2], I[:, 1:3]) == 1
    assert intersection_dim(I[:, :2], I[:, 2:]) == 0
    assert intersection_dim(I[:, :0], I) == 0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_relative_morse_antisymmetric(n, seed):
    r = np.random.default_rng(seed)
    S, T = random_invertible(r, n), random_invertible(r, n)
    assert relative_morse_index(S, T) + relative_morse_index(T, S) == 0


# -- sign-compact window model ---------------------------------------------


def sc(j, k, plus=True, minus=False):
    return SignCompactOperator(np.asarray(j, float), SymmetricMatrix(np.asarray(k, float)), plus, minus)


def test_needs_a_tail():
    with pytest.raises(ValueError):
        sc([1.0], [[0.0]], False, False)


def test_sc_zero_perturbations():
    S = sc([1, -1], np.zeros((2, 2)), True, True)
    assert relative_morse_index_sc(S, S) == 0


def test_sc_window_intersection_formula():
    # window eigenvalue -1 -> +1: E-(S) meets E+(T) in one dimension, the other term is 0
    S = sc([1, -1], np.zeros((2, 2)), True, True)
    T = sc([1, -1], np.diag([0.0, 2.0]), True, True)
    assert relative_morse_index_sc(S, T) == 1
    assert relative_morse_index_sc(T, S) == -1


@pytest.mark.parametrize("n", range(1, 9))
def test_sc_krasnoselskii_endpoints(n):
    J = np.ones(2 * n)
    K = np.zeros((2 * n, 2 * n))
    K[:n, :n] = -2.0 * np.eye(n)
    base, pert = sc(J, np.zeros_like(K)), sc(J, K)
    assert relative_morse_index_sc(pert, base) == n
    assert relative_morse_index_sc(base, pert) == -n


def test_sc_mismatched_j():
    with pytest.raises(MismatchedJ):
        relative_morse_index_sc(sc([1], [[0]], True, True), sc([1], [[0]], True, False))
    with pytest.raises(MismatchedJ):
        relative_morse_index_sc(sc([1, -1], np.zeros((2, 2)), True, True),
                                sc([-1, 1], np.zeros((2, 2)), True, True))


def test_sc_common_window_padding():
    # different window sizes are padded with tail directions
    S = sc([1.0], [[-3.0]])
    T = sc([1.0, 1.0], np.zeros((2, 2)))
    assert relative_morse_index_sc(S, T) == 1


def test_sc_degenerate():
    with pytest.raises(DegenerateOperator):
        relative_morse_index_sc(sc([1.0], [[-1.0]]), sc([1.0], [[0.0]]))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5), st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_sc_padding_invariance(n, extra, seed):
    r = np.random.default_rng(seed)
    j = r.choice([-1.0, 1.0], n)
    S = SignCompactOperator.from_window(j, random_invertible(r, n), True, True)
    T = SignCompactOperator.from_window(j, random_invertible(r, n), True, True)
    signs = r.choice([-1.0, 1.0], extra)
    v = relative_morse_index_sc(S, T)
    assert relative_morse_index_sc(S.padded(signs), T.padded(signs)) == v
    assert v == inertia(S.window_matrix()) - inertia(T.window_matrix())


def test_classify_essential_examples():
    assert classify_essential(sc([1], [[0]], True, False)) is EssentialClass.ESSENTIALLY_POSITIVE
    assert classify_essential(sc([1], [[0]], False, True)) is EssentialClass.ESSENTIALLY_NEGATIVE
    assert classify_essential(sc([1], [[0]], True, True)) is EssentialClass.STRONGLY_INDEFINITE


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.booleans(), st.booleans(), st.integers(0, 2**32 - 1))
def test_classify_ignores_k(n, plus, minus, seed):
    if not (plus or minus):
        minus = True
    r = np.random.default_rng(seed)
    j = r.choice([-1.0, 1.0], n)
    a = sc(j, np.zeros((n, n)), plus, minus)
    b = sc(j, random_symmetric(r, n, 10.0), plus, minus)
    assert classify_essential(a) == classify_essential(b)


def test_serialization_round_trips(rng):
    A = SymmetricMatrix(random_symmetric(rng, 4))
    assert SymmetricMatrix.from_json(A.to_json()) == A
    assert A.to_csv().splitlines()[0] == "dim=4"
    assert np.allclose(SymmetricMatrix.from_csv(A.to_csv()).entries, A.entries)
    S = sc([1, -1], random_symmetric(rng, 2), True, True)
    assert operator_from_json(S.to_json()) == S
    assert operator_from_json(A.to_json()) == A
