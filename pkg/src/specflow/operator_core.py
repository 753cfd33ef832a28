"""Dense selfadjoint operators, Morse indices and compactly perturbed sign operators.

A bounded selfadjoint Fredholm operator ``J + K`` is modelled by a finite
*window*: ``J`` is a fixed sign operator (``+1``/``-1`` on each window basis
vector, and ``+1`` / ``-1`` on the infinite tails), ``K`` is a symmetric matrix
supported on the window.  Outside the window the operator acts as ``J`` itself,
so every spectral computation is window-local.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import (
    DegenerateOperator,
    DimensionMismatch,
    EigenNonConvergence,
    MismatchedJ,
)

DEFAULT_GAP = 1e-8
RANK_CUTOFF = 1e-8


@dataclass(frozen=True, eq=False)
class SymmetricMatrix:
    """Dense real symmetric matrix; symmetrized at construction."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.array(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
            raise DimensionMismatch(f"expected a non-empty square array, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise ValueError("matrix entries must be finite")
        a = 0.5 * (a + a.T)
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __array__(self, dtype=None, copy=None):
        return self.entries if dtype is None else self.entries.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, SymmetricMatrix):
            return NotImplemented
        return self.dim == other.dim and np.array_equal(self.entries, other.entries)

    def __hash__(self):
        return hash((self.dim, self.entries.tobytes()))

    def norm(self) -> float:
        return float(np.linalg.norm(self.entries, 2))

    # -- serialization -------------------------------------------------

    def to_json(self) -> dict:
        return {"dim": self.dim, "entries": self.entries.tolist()}

    @classmethod
    def from_json(cls, obj) -> "SymmetricMatrix":
        if isinstance(obj, str):
            obj = json.loads(obj)
        m = cls(np.asarray(obj["entries"], dtype=float))
        if m.dim != int(obj["dim"]):
            raise DimensionMismatch(f"header dim={obj['dim']} but entries are {m.dim}x{m.dim}")
        return m

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"dim={self.dim}\n")
        w = csv.writer(buf, lineterminator="\n")
        for row in self.entries:
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "SymmetricMatrix":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        header = lines[0].strip()
        if not header.startswith("dim="):
            raise ValueError(f"missing 'dim=N' header, got {header!r}")
        n = int(header[4:])
        rows = [[float(x) for x in r] for r in csv.reader(lines[1:])]
        m = cls(np.array(rows))
        if m.dim != n:
            raise DimensionMismatch(f"header dim={n} but body is {m.dim}x{m.dim}")
        return m


def as_array(A) -> np.ndarray:
    if isinstance(A, SymmetricMatrix):
        return A.entries
    if isinstance(A, SignCompactOperator):
        return A.window_matrix()
    return np.asarray(A, dtype=float)


@dataclass(frozen=True)
class Spectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residual: float

    def negative_subspace(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues < 0]

    def positive_subspace(self) -> np.ndarray:
        return self.eigenvectors[:, self.eigenvalues > 0]

    def min_abs(self) -> float:
        return float(np.min(np.abs(self.eigenvalues)))


def _fix_signs(vecs: np.ndarray) -> np.ndarray:
    # first component of (numerically) largest magnitude made positive
    mags = np.abs(vecs)
    top = mags.max(axis=0)
    idx = np.argmax(mags >= top - 1e-12 * np.maximum(top, 1.0), axis=0)
    signs = np.sign(vecs[idx, np.arange(vecs.shape[1])])
    signs[signs == 0] = 1.0
    return vecs * signs


def eigendecompose(A, tol: float = 1e-10) -> Spectrum:
    """Full eigendecomposition with an a-posteriori residual certificate.

    Raises :class:`EigenNonConvergence` when ``max_k |A v_k - l_k v_k|``
    exceeds ``tol * |A|``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = as_array(A)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got {a.shape}")
    a = 0.5 * (a + a.T)
    try:
        w, v = np.linalg.eigh(a)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK failure
        raise EigenNonConvergence(f"eigh failed: {exc}", residual=float("inf")) from exc
    v = _fix_signs(v)
    residual = float(np.max(np.linalg.norm(a @ v - v * w, axis=0))) if a.size else 0.0
    scale = max(float(np.linalg.norm(a, 2)), np.finfo(float).tiny)
    if residual > tol * scale:
        raise EigenNonConvergence(
            f"eigendecomposition residual {residual:.3e} exceeds {tol:.1e}*|A|", residual
        )
    return Spectrum(w, v, residual)


def _check_gap(w: np.ndarray, gap: float, what: str = "operator"):
    m = float(np.min(np.abs(w))) if w.size else np.inf
    if m < gap:
        raise DegenerateOperator(
            f"{what} has an eigenvalue of modulus {m:.3e} inside the gap {gap:.1e}", m
        )


def morse_index(A, gap: float = DEFAULT_GAP) -> int:
    """Number of negative eigenvalues of an invertible symmetric matrix."""
    w = np.linalg.eigvalsh(as_array(A))
    _check_gap(w, gap)
    return int(np.count_nonzero(w < 0))


def intersection_dim(U: np.ndarray, V: np.ndarray, cutoff: float = RANK_CUTOFF) -> int:
    """dim(span U ∩ span V) for orthonormal column sets U, V."""
    if U.shape[1] == 0 or V.shape[1] == 0:
        return 0
    s = np.linalg.svd(np.hstack([U, V]), compute_uv=False)
    rank = int(np.count_nonzero(s > cutoff))
    return U.shape[1] + V.shape[1] - rank


def _mu_rel_windows(S: np.ndarray, T: np.ndarray, gap: float) -> int:
    if S.shape != T.shape:
        raise DimensionMismatch(f"operators have shapes {S.shape} and {T.shape}")
    ws, vs = np.linalg.eigh(0.5 * (S + S.T))
    wt, vt = np.linalg.eigh(0.5 * (T + T.T))
    _check_gap(ws, gap, "first operator")
    _check_gap(wt, gap, "second operator")
    neg_s, pos_s = vs[:, ws < 0], vs[:, ws > 0]
    neg_t, pos_t = vt[:, wt < 0], vt[:, wt > 0]
    return intersection_dim(neg_s, pos_t) - intersection_dim(pos_s, neg_t)


def relative_morse_index(S, T, gap: float = DEFAULT_GAP) -> int:
    """dim(E-(S) ∩ E+(T)) - dim(E+(S) ∩ E-(T)) via ranks of stacked bases."""
    return _mu_rel_windows(as_array(S), as_array(T), gap)


class EssentialClass(str, Enum):
    ESSENTIALLY_POSITIVE = "essentially_positive"
    ESSENTIALLY_NEGATIVE = "essentially_negative"
    STRONGLY_INDEFINITE = "strongly_indefinite"


@dataclass(frozen=True, eq=False)
class SignCompactOperator:
    """``J + K`` with ``K`` supported on a finite window.

    ``j_window`` holds the signs of ``J`` on the window basis; ``tail_plus`` /
    ``tail_minus`` say whether ``J`` has an infinite ``+1`` / ``-1`` eigenspace
    outside the window.
    """

    j_window: np.ndarray
    k_window: SymmetricMatrix
    tail_plus: bool = True
    tail_minus: bool = False

    def __post_init__(self):
        j = np.asarray(self.j_window, dtype=float).ravel()
        if j.size == 0 or not np.all(np.isin(j, (-1.0, 1.0))):
            raise ValueError("j_window must be a non-empty sequence of +1/-1")
        k = self.k_window
        if not isinstance(k, SymmetricMatrix):
            k = SymmetricMatrix(k)
        if k.dim != j.size:
            raise DimensionMismatch(f"k_window is {k.dim}x{k.dim}, j_window has {j.size} signs")
        if not (self.tail_plus or self.tail_minus):
            raise ValueError("at least one infinite tail must be present")
        j.setflags(write=False)
        object.__setattr__(self, "j_window", j)
        object.__setattr__(self, "k_window", k)
        object.__setattr__(self, "tail_plus", bool(self.tail_plus))
        object.__setattr__(self, "tail_minus", bool(self.tail_minus))

    @classmethod
    def from_window(cls, j_window, window_matrix, tail_plus=True, tail_minus=False):
        """Build from the full window matrix ``J + K`` instead of ``K``."""
        j = np.asarray(j_window, dtype=float)
        return cls(j, SymmetricMatrix(np.asarray(window_matrix, dtype=float) - np.diag(j)),
                   tail_plus, tail_minus)

    @property
    def window_dim(self) -> int:
        return self.j_window.size

    def window_matrix(self) -> np.ndarray:
        return np.diag(self.j_window) + self.k_window.entries

    def same_j(self, other: "SignCompactOperator") -> bool:
        return (self.tail_plus == other.tail_plus and self.tail_minus == other.tail_minus
                and np.array_equal(self.j_window, other.j_window))

    def padded(self, extra_signs) -> "SignCompactOperator":
        """Enlarge the window by tail directions with the given signs (K = 0 there)."""
        extra = np.asarray(extra_signs, dtype=float).ravel()
        if np.any(extra > 0) and not self.tail_plus:
            raise MismatchedJ("cannot borrow a +1 direction: no +1 tail")
        if np.any(extra < 0) and not self.tail_minus:
            raise MismatchedJ("cannot borrow a -1 direction: no -1 tail")
        n, e = self.window_dim, extra.size
        k = np.zeros((n + e, n + e))
        k[:n, :n] = self.k_window.entries
        return SignCompactOperator(np.concatenate([self.j_window, extra]), SymmetricMatrix(k),
                                   self.tail_plus, self.tail_minus)

    def __eq__(self, other):
        if not isinstance(other, SignCompactOperator):
            return NotImplemented
        return self.same_j(other) and self.k_window == other.k_window

    def __hash__(self):
        return hash((self.j_window.tobytes(), self.k_window, self.tail_plus, self.tail_minus))

    def to_json(self) -> dict:
        return {
            "j_window": [int(s) for s in self.j_window],
            "k_window": self.k_window.entries.tolist(),
            "tail_plus": self.tail_plus,
            "tail_minus": self.tail_minus,
        }

    @classmethod
    def from_json(cls, obj) -> "SignCompactOperator":
        if isinstance(obj, str):
            obj = json.loads(obj)
        return cls(np.asarray(obj["j_window"], dtype=float),
                   SymmetricMatrix(np.asarray(obj["k_window"], dtype=float)),
                   bool(obj["tail_plus"]), bool(obj["tail_minus"]))


def common_window(S: SignCompactOperator, T: SignCompactOperator):
    """Pad the shorter window so both operators share one window and one J."""
    if S.tail_plus != T.tail_plus or S.tail_minus != T.tail_minus:
        raise MismatchedJ("tail flags differ")
    n, m = S.window_dim, T.window_dim
    if n < m:
        S = S.padded(T.j_window[n:])
    elif m < n:
        T = T.padded(S.j_window[m:])
    if not np.array_equal(S.j_window, T.j_window):
        raise MismatchedJ(f"sign patterns differ: {S.j_window} vs {T.j_window}")
    return S, T


def relative_morse_index_sc(S: SignCompactOperator, T: SignCompactOperator,
                            gap: float = DEFAULT_GAP) -> int:
    """Relative Morse index of ``J + K_S`` and ``J + K_T``.

    Outside the common window both operators coincide with ``J``; a tail
    direction lies in ``E+`` (or ``E-``) of both, so it never enters the two
    intersections and the window value is exact.
    """
    S, T = common_window(S, T)
    return _mu_rel_windows(S.window_matrix(), T.window_matrix(), gap)


def classify_essential(S: SignCompactOperator) -> EssentialClass:
    # K is finite rank, so the essential spectrum is exactly the set of tail signs
    if S.tail_plus and S.tail_minus:
        return EssentialClass.STRONGLY_INDEFINITE
    if S.tail_plus:
        return EssentialClass.ESSENTIALLY_POSITIVE
    return EssentialClass.ESSENTIALLY_NEGATIVE


def operator_from_json(obj):
    """Decode either operator JSON shape."""
    if "j_window" in obj:
        return SignCompactOperator.from_json(obj)
    return SymmetricMatrix.from_json(obj)
