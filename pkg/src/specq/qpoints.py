"""Classical Q-points: unordered Q-tuples of points in R^n.

A :class:`QPoint` stores its atoms as a ``(Q, n)`` float array in
lexicographic order, so equality of two Q-points is multiset equality.
The distance between Q-points is the optimal-matching metric

    G(S, T) = min_sigma sqrt(sum_i |S_i - T_sigma(i)|^2).
"""

from __future__ import annotations

import itertools
import math
import json
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

__all__ = [
    "QPoint",
    "DimensionMismatch",
    "eta",
    "translate",
    "norm",
    "metric_G",
    "metric_G_bruteforce",
    "optimal_matching",
    "sep",
    "canonical_order",
    "batch_metric_G2",
    "as_qpoint",
    "BRUTE_FORCE_MAX_Q",
]

#: Largest Q for which the metric enumerates all permutations.
BRUTE_FORCE_MAX_Q = 5


class DimensionMismatch(ValueError):
    """Raised when two Q-points do not share (Q, n)."""


def canonical_order(atoms: np.ndarray) -> np.ndarray:
    """Return ``atoms`` (shape ``(Q, n)``) sorted lexicographically by row."""
    atoms = np.asarray(atoms, dtype=float)
    if atoms.shape[0] <= 1:
        return atoms.copy()
    # np.lexsort uses the last key as primary, so reverse the columns.
    idx = np.lexsort(atoms.T[::-1])
    return atoms[idx]


class QPoint:
    """An unordered Q-tuple of points of R^n.

    Parameters
    ----------
    atoms : array_like
        Either a ``(Q, n)`` array or a length-``Q`` sequence of scalars
        (interpreted as ``n = 1``).
    """

    __slots__ = ("_atoms", "_hash")

    def __init__(self, atoms: Iterable) -> None:
        arr = np.array(atoms, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"atoms must have shape (Q, n) with Q, n >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("atoms must be finite")
        arr = canonical_order(arr)
        arr.setflags(write=False)
        self._atoms = arr
        self._hash = None

    @classmethod
    def collapsed(cls, p, Q: int) -> "QPoint":
        """Return ``Q[[p]]``, the Q-point with all atoms equal to ``p``."""
        p = np.atleast_1d(np.asarray(p, dtype=float))
        return cls(np.repeat(p[None, :], Q, axis=0))

    @property
    def atoms(self) -> np.ndarray:
        """Read-only ``(Q, n)`` array of atoms in canonical order."""
        return self._atoms

    @property
    def Q(self) -> int:
        return self._atoms.shape[0]

    @property
    def n(self) -> int:
        return self._atoms.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, QPoint):
            return NotImplemented
        return self._atoms.shape == other._atoms.shape and bool(
            np.array_equal(self._atoms, other._atoms)
        )

    def __hash__(self) -> int:
        if self._hash is None:
            self._hash = hash((self._atoms.shape, self._atoms.tobytes()))
        return self._hash

    def __repr__(self) -> str:
        return f"QPoint({self._atoms.tolist()})"

    def is_collapsed(self) -> bool:
        """True when all atoms coincide."""
        return bool(np.all(self._atoms == self._atoms[0]))

    def to_json(self) -> list:
        """JSON form: a list of Q lists of n numbers."""
        return self._atoms.tolist()

    @classmethod
    def from_json(cls, data) -> "QPoint":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(data)


def _check_same_shape(S: QPoint, T: QPoint) -> None:
    if S.atoms.shape != T.atoms.shape:
        raise DimensionMismatch(
            f"Q-points have different (Q, n): {S.atoms.shape} vs {T.atoms.shape}"
        )


def eta(S: QPoint) -> np.ndarray:
    """Barycenter: arithmetic mean of the atoms, a vector of R^n."""
    return S.atoms.mean(axis=0)


def translate(S: QPoint, v, sign: int = 1) -> QPoint:
    """Shift every atom by ``+v`` (``sign=+1``) or ``-v`` (``sign=-1``)."""
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    v = np.atleast_1d(np.asarray(v, dtype=float))
    if v.shape != (S.n,):
        raise DimensionMismatch(f"translation vector has shape {v.shape}, expected ({S.n},)")
    return QPoint(S.atoms + sign * v)


def norm(S: QPoint) -> float:
    """``|S| = sqrt(sum_i |S_i|^2)``, the distance to ``Q[[0]]``."""
    return float(np.sqrt(np.sum(S.atoms**2)))


@lru_cache(maxsize=None)
def _permutations(Q: int) -> np.ndarray:
    # itertools yields permutations in lexicographic order, so argmin picks
    # the lowest-index permutation among ties.
    return np.array(list(itertools.permutations(range(Q))), dtype=np.intp)


def _cost_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    diff = A[:, None, :] - B[None, :, :]
    return np.sum(diff * diff, axis=-1)


def _bruteforce(cost: np.ndarray) -> tuple[np.ndarray, float]:
    Q = cost.shape[0]
    perms = _permutations(Q)
    totals = cost[np.arange(Q)[None, :], perms].sum(axis=1)
    k = int(np.argmin(totals))
    return perms[k], _matched_cost(cost, perms[k])


def _matched_cost(cost: np.ndarray, sigma: np.ndarray) -> float:
    # Correctly rounded sum, so optimal matchings with the same terms give
    # bit-identical costs whatever solver found them.
    return math.fsum(cost[np.arange(cost.shape[0]), sigma].tolist())


def optimal_matching(S: QPoint, T: QPoint, method: str = "auto") -> tuple[np.ndarray, float]:
    """Return ``(sigma, cost)`` minimizing ``sum_i |S_i - T_sigma(i)|^2``.

    Parameters
    ----------
    method : {"auto", "assignment", "permutations"}
        ``"assignment"`` runs the Hungarian method on the squared-distance
        cost matrix, ``"permutations"`` enumerates all ``Q!`` matchings
        (ties go to the lexicographically lowest permutation).  ``"auto"``
        enumerates for ``Q <= 5`` and uses the assignment solver above.
    """
    _check_same_shape(S, T)
    cost = _cost_matrix(S.atoms, T.atoms)
    if method == "auto":
        method = "permutations" if S.Q <= BRUTE_FORCE_MAX_Q else "assignment"
    if method == "permutations":
        return _bruteforce(cost)
    if method != "assignment":
        raise ValueError(f"unknown matching method {method!r}")
    rows, cols = linear_sum_assignment(cost)
    sigma = np.empty(S.Q, dtype=np.intp)
    sigma[rows] = cols
    return sigma, _matched_cost(cost, sigma)


def metric_G(S: QPoint, T: QPoint, method: str = "auto") -> float:
    """Optimal-matching distance between two Q-points."""
    _, c = optimal_matching(S, T, method)
    return math.sqrt(max(c, 0.0))


def metric_G_bruteforce(S: QPoint, T: QPoint) -> float:
    """Reference implementation: plain loops over all ``Q!`` permutations.

    Kept free of numpy reductions so that it is an independent check on
    :func:`metric_G`; squared costs are accumulated in the same order.
    """
    _check_same_shape(S, T)
    A, B = S.atoms.tolist(), T.atoms.tolist()
    Q = len(A)
    cost = [[sum((a - b) * (a - b) for a, b in zip(A[i], B[j])) for j in range(Q)] for i in range(Q)]
    best, best_terms = float("inf"), []
    for perm in itertools.permutations(range(Q)):
        terms = [cost[i][j] for i, j in enumerate(perm)]
        c = math.fsum(terms)
        if c < best:
            best, best_terms = c, terms
    return math.sqrt(math.fsum(best_terms))


def sep(S: QPoint) -> float:
    """Least distance between distinct atom values, 0 if all coincide."""
    A = S.atoms
    best = np.inf
    for i in range(S.Q):
        for j in range(i + 1, S.Q):
            if np.array_equal(A[i], A[j]):
                continue
            best = min(best, float(np.linalg.norm(A[i] - A[j])))
    return 0.0 if not np.isfinite(best) else best


def batch_metric_G2(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Squared matching distance for stacks of Q-points.

    Parameters
    ----------
    A, B : ndarray, shape (..., Q, n)

    Returns
    -------
    ndarray, shape (...)
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape:
        raise DimensionMismatch(f"shape mismatch {A.shape} vs {B.shape}")
    Q, n = A.shape[-2:]
    if n == 1:
        # Sorted matching is optimal on the line.
        a = np.sort(A[..., 0], axis=-1)
        b = np.sort(B[..., 0], axis=-1)
        return np.sum((a - b) ** 2, axis=-1)
    cost = np.sum((A[..., :, None, :] - B[..., None, :, :]) ** 2, axis=-1)
    if Q <= BRUTE_FORCE_MAX_Q + 1:
        perms = _permutations(Q)
        totals = cost[..., np.arange(Q)[None, :], perms].sum(axis=-1)
        return totals.min(axis=-1)
    flat = cost.reshape(-1, Q, Q)
    out = np.empty(flat.shape[0])
    for k, c in enumerate(flat):
        r, col = linear_sum_assignment(c)
        out[k] = c[r, col].sum()
    return out.reshape(cost.shape[:-2])


def as_qpoint(x: QPoint | Sequence) -> QPoint:
    """Coerce array-like input to a :class:`QPoint`."""
    return x if isinstance(x, QPoint) else QPoint(x)
