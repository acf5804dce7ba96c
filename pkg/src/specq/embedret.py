"""Embedding of special Q-points into Euclidean space and retractions onto it.

For ``n = 1`` the centered part of a Q-point embeds isometrically into
the monotone cone ``{x_1 <= ... <= x_Q, sum x_i = 0}`` of ``R^Q`` by
sorting its atoms.  A special Q-point ``P`` with triple ``(v, w, z)``
then maps to

    zeta(P) = (xi(v), xi(w), z),

and with the weighted norm ``|a|^2 + |b|^2 + Q|z|^2`` this is an isometry
onto the set ``Qset = {min(|a|, |b|) = 0}``.  Batch routines below work on
flat Euclidean vectors ``X = [a, b, sqrt(Q) z]`` of length ``2Q + 1``,
for which the weighted norm becomes the plain Euclidean one.

Retractions onto ``Qset``:

* :func:`varrho` -- isotonic projection of each part, then the explicit
  pair map :func:`R_pair`; Lipschitz, identity on ``Qset``.
* :func:`varrho_star` -- the same with the cut-off map :func:`R_delta`.
* :func:`project_nearest` -- the Euclidean nearest-point projection,
  used by the energy solver because it makes nodewise updates monotone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .qpoints import QPoint, eta, norm
from .specpoints import SpecPoint, cone_project, metric_Gs

__all__ = [
    "UnsupportedEmbedding",
    "Embedding",
    "SortedEmbedding",
    "register_embedding",
    "get_embedding",
    "EmbeddedPoint",
    "pava",
    "isotonic_batch",
    "xi_sorted",
    "xi_sorted_inv",
    "rho_sorted",
    "R_pair",
    "chi_delta",
    "R_delta",
    "DELTA0",
    "zeta",
    "zeta_inv",
    "varrho",
    "varrho_star",
    "varrho_vec",
    "varrho_star_vec",
    "project_nearest",
    "zeta_batch",
    "zeta_inv_batch",
    "luckhaus_interpolate",
    "random_circle_trace",
    "LuckhausField",
    "luckhaus_ratio",
    "luckhaus_constant_fit",
    "perturbed_circle_trace",
    "cutoff_energy_terms",
    "cutoff_energy_constant",
    "cutoff_displacement_constant",
    "circle_energy",
    "circle_distance2",
    "lipschitz_extend",
    "sampled_lipschitz",
]

#: Upper bound on admissible cut-off parameters of :func:`chi_delta`.
DELTA0 = 0.5


class UnsupportedEmbedding(NotImplementedError):
    """No concrete embedding is registered for the requested (Q, n)."""


# ---------------------------------------------------------------------------
# isotonic regression


def pava(x: Sequence[float], w: Sequence[float] | None = None) -> np.ndarray:
    """Nondecreasing least-squares fit by pool-adjacent-violators.

    Parameters
    ----------
    x : sequence of float
        Values to fit.
    w : sequence of float, optional
        Positive weights (default all ones).

    Returns
    -------
    ndarray
        The Euclidean projection of ``x`` onto ``{y_1 <= ... <= y_Q}``.
    """
    x = np.asarray(x, dtype=float)
    w = np.ones_like(x) if w is None else np.asarray(w, dtype=float)
    # Each block keeps (weighted mean, total weight, length).
    means: list[float] = []
    weights: list[float] = []
    counts: list[int] = []
    for xi, wi in zip(x, w):
        means.append(float(xi))
        weights.append(float(wi))
        counts.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, c2 = means.pop(), weights.pop(), counts.pop()
            m1, w1, c1 = means.pop(), weights.pop(), counts.pop()
            wt = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt)
            weights.append(wt)
            counts.append(c1 + c2)
    return np.repeat(np.array(means), counts)


def isotonic_batch(X: np.ndarray) -> np.ndarray:
    """Unweighted isotonic regression along the last axis.

    Uses the min-max representation
    ``y_i = max_{j <= i} min_{k >= i} mean(x_j..x_k)``, vectorized over
    the leading axes.  Intended for small last-axis lengths.
    """
    X = np.asarray(X, dtype=float)
    Q = X.shape[-1]
    if Q == 1:
        return X.copy()
    if Q == 2:
        out = X.copy()
        bad = X[..., 0] > X[..., 1]
        m = 0.5 * (X[..., 0] + X[..., 1])
        out[..., 0] = np.where(bad, m, X[..., 0])
        out[..., 1] = np.where(bad, m, X[..., 1])
        return out
    C = np.concatenate([np.zeros(X.shape[:-1] + (1,)), np.cumsum(X, axis=-1)], axis=-1)
    j = np.arange(Q)[:, None]
    k = np.arange(Q)[None, :]
    length = np.where(k >= j, k - j + 1, 1)
    A = (C[..., None, 1:] - C[..., :-1, None]) / length  # A[..., j, k] = mean(x_j..x_k)
    out = np.empty_like(X)
    for i in range(Q):
        inner = A[..., : i + 1, i:].min(axis=-1)  # over k >= i, for each j <= i
        out[..., i] = inner.max(axis=-1)
    return out


# ---------------------------------------------------------------------------
# the sorting embedding


def _require_n1(n: int) -> None:
    if n != 1:
        raise UnsupportedEmbedding(f"no concrete embedding for n = {n}; only n = 1 is provided")


def xi_sorted(S: QPoint) -> np.ndarray:
    """Atoms of a Q-point of R^1 sorted ascending."""
    _require_n1(S.n)
    return np.sort(S.atoms[:, 0])


def xi_sorted_inv(x) -> QPoint:
    """Q-point of R^1 with the given atom values."""
    return QPoint(np.asarray(x, dtype=float)[:, None])


def rho_sorted(x) -> np.ndarray:
    """Nearest-point projection of ``R^Q`` onto the monotone cone."""
    return pava(x)


class Embedding:
    """Contract for an embedding of centered Q-points into ``R^N``.

    Subclasses provide ``forward`` (centered Q-point to vector), ``inverse``
    on the image and a Lipschitz retraction ``retract`` onto the image.
    """

    name: str = "abstract"
    Q: int
    n: int
    N: int

    def forward(self, S: QPoint) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError

    def inverse(self, x) -> QPoint:  # pragma: no cover - interface
        raise NotImplementedError

    def retract(self, x) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


class SortedEmbedding(Embedding):
    """Sorting embedding for ``n = 1`` (``N = Q``)."""

    name = "sorted-n1"

    def __init__(self, Q: int, n: int = 1) -> None:
        _require_n1(n)
        self.Q, self.n, self.N = int(Q), 1, int(Q)

    def forward(self, S: QPoint) -> np.ndarray:
        return xi_sorted(S)

    def inverse(self, x) -> QPoint:
        return xi_sorted_inv(x)

    def retract(self, x) -> np.ndarray:
        return rho_sorted(x)


_REGISTRY: dict[str, Callable[[int, int], Embedding]] = {"sorted-n1": SortedEmbedding}


def register_embedding(name: str, factory: Callable[[int, int], Embedding]) -> None:
    """Register an embedding factory ``factory(Q, n)`` under ``name``."""
    _REGISTRY[name] = factory


def get_embedding(Q: int, n: int, name: str = "sorted-n1") -> Embedding:
    """Look up an embedding for ``(Q, n)``."""
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise UnsupportedEmbedding(f"unknown embedding {name!r}") from None
    return factory(Q, n)


# ---------------------------------------------------------------------------
# embedded points


@dataclass(frozen=True)
class EmbeddedPoint:
    """A point ``(a, b, z)`` of ``R^N x R^N x R^n``.

    The norm is ``sqrt(|a|^2 + |b|^2 + Q|z|^2)`` with ``Q = len(a)``.
    """

    a: np.ndarray
    b: np.ndarray
    z: np.ndarray

    def __post_init__(self) -> None:
        for name in ("a", "b", "z"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))

    @property
    def Q(self) -> int:
        return self.a.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flat Euclidean coordinates ``[a, b, sqrt(Q) z]``."""
        return np.concatenate([self.a, self.b, np.sqrt(self.Q) * self.z])

    @classmethod
    def from_vector(cls, X, Q: int) -> "EmbeddedPoint":
        X = np.asarray(X, dtype=float)
        return cls(X[:Q], X[Q : 2 * Q], X[2 * Q :] / np.sqrt(Q))

    def norm(self) -> float:
        return float(np.linalg.norm(self.to_vector()))

    def in_image(self, tol: float = 0.0) -> bool:
        """Membership in ``Qset``: both parts monotone, centered, one zero."""
        na, nb = np.linalg.norm(self.a), np.linalg.norm(self.b)
        ok = min(na, nb) <= tol
        for part in (self.a, self.b):
            ok &= bool(np.all(np.diff(part) >= -tol)) and abs(part.sum()) <= tol * max(1, part.size)
        return bool(ok)


def zeta(P: SpecPoint) -> EmbeddedPoint:
    """Embed a special Q-point of R^1."""
    _require_n1(P.n)
    z = eta(P.base)
    if P.is_collapsed():
        zero = np.zeros(P.Q)
        return EmbeddedPoint(zero, zero.copy(), z)
    c = np.sort(P.atoms[:, 0] - z[0])
    zero = np.zeros(P.Q)
    if P.sign == 1:
        return EmbeddedPoint(c, zero, z)
    return EmbeddedPoint(zero, c, z)


def zeta_inv(E: EmbeddedPoint, tol: float = 1e-9) -> SpecPoint:
    """Inverse of :func:`zeta` on ``Qset`` (up to ``tol``)."""
    na, nb = np.linalg.norm(E.a), np.linalg.norm(E.b)
    if min(na, nb) > tol:
        raise ValueError(f"point is not in the embedded image: min(|a|,|b|) = {min(na, nb):.3e}")
    if nb <= na:
        return SpecPoint(QPoint((E.a + E.z[0])[:, None]), 1)
    return SpecPoint(QPoint((E.b + E.z[0])[:, None]), -1)


# ---------------------------------------------------------------------------
# explicit maps R, chi_delta, R_delta


def R_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Lipschitz retraction of ``R^N x R^N`` onto the union of the two axes.

    ``(x - (|y|/|x|) x, 0)`` if ``|x| > |y|``, ``(0, y - (|x|/|y|) y)`` if
    ``|y| > |x|`` and ``(0, 0)`` on the diagonal ``|x| = |y|``.  Works on
    stacks: the last axis is the vector axis.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    ny = np.linalg.norm(y, axis=-1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        fx = np.where(nx > ny, 1.0 - ny / np.where(nx > 0, nx, 1.0), 0.0)
        fy = np.where(ny > nx, 1.0 - nx / np.where(ny > 0, ny, 1.0), 0.0)
    return fx * x, fy * y


def chi_delta(s, delta: float):
    """Piecewise linear cut-off: 0 on [0, delta], 1 on [1, inf), linear between."""
    if not 0.0 < delta < 1.0:
        raise ValueError("delta must lie in (0, 1)")
    s = np.asarray(s, dtype=float)
    out = np.clip((s - delta) / (1.0 - delta), 0.0, 1.0)
    return out if out.ndim else float(out)


def _radial_cutoff(x: np.ndarray, delta: float) -> np.ndarray:
    nx = np.linalg.norm(x, axis=-1, keepdims=True)
    c = chi_delta(nx, delta)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(nx > 0, c * x / np.where(nx > 0, nx, 1.0), 0.0)


def R_delta(x, y, delta: float) -> tuple[np.ndarray, np.ndarray]:
    """Cut-off retraction onto the axes.

    On ``{|y| <= delta^2}`` this is ``(chi(|x|) x/|x|, 0)``, on
    ``{|x| <= delta^2}`` it is ``(0, chi(|y|) y/|y|)``.  Everywhere it is
    defined as ``R_pair`` composed with the product radial cut-off
    ``(x, y) -> (chi(|x|) x/|x|, chi(|y|) y/|y|)``, which is a Lipschitz map
    agreeing with both branches where they apply.
    """
    if not 0.0 < delta < DELTA0:
        raise ValueError(f"delta must lie in (0, {DELTA0})")
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return R_pair(_radial_cutoff(x, delta), _radial_cutoff(y, delta))


# ---------------------------------------------------------------------------
# retractions on flat coordinates X = [a, b, sqrt(Q) z]


#: Centered vectors whose entries sum to less than this (relative) count as centered.
CENTER_TOL = 1e-12


def _cone_projection(a: np.ndarray) -> np.ndarray:
    """Nearest point of the centered monotone cone (batch, last axis)."""
    iso = isotonic_batch(a)
    out = iso - iso.mean(axis=-1, keepdims=True)
    # Members of the cone (sorted, mean zero up to centering roundoff) are
    # returned unchanged, so the retraction is exactly the identity on the image.
    scale = np.maximum(np.max(np.abs(a), axis=-1, initial=0.0), 1.0)
    member = np.all(np.diff(a, axis=-1) >= 0, axis=-1) & (np.abs(a.sum(axis=-1)) <= CENTER_TOL * scale)
    return np.where(member[..., None], a, out)


def _split(X: np.ndarray, Q: int):
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != 2 * Q + 1:
        raise UnsupportedEmbedding(f"expected vectors of length {2 * Q + 1} for (Q, n) = ({Q}, 1)")
    return X[..., :Q], X[..., Q : 2 * Q], X[..., 2 * Q :]


def varrho_vec(X, Q: int) -> np.ndarray:
    """Lipschitz retraction onto ``Qset`` in flat coordinates (batch)."""
    a, b, z = _split(X, Q)
    a2, b2 = R_pair(_cone_projection(a), _cone_projection(b))
    return np.concatenate([a2, b2, z], axis=-1)


def varrho_star_vec(X, Q: int, delta: float) -> np.ndarray:
    """Cut-off retraction onto ``Qset`` in flat coordinates (batch)."""
    a, b, z = _split(X, Q)
    a2, b2 = R_delta(_cone_projection(a), _cone_projection(b), delta)
    return np.concatenate([a2, b2, z], axis=-1)


def project_nearest(X, Q: int) -> np.ndarray:
    """Euclidean nearest-point projection onto ``Qset`` (batch).

    ``Qset`` is the union of two convex cones (times the z axis); the
    projection picks the closer of the two cone projections, preferring the
    positive one on exact ties.
    """
    if Q == 2:
        return _project_nearest_q2(np.asarray(X, dtype=float))
    a, b, z = _split(X, Q)
    pa, pb = _cone_projection(a), _cone_projection(b)
    cost_pos = np.sum((a - pa) ** 2, axis=-1) + np.sum(b * b, axis=-1)
    cost_neg = np.sum(a * a, axis=-1) + np.sum((b - pb) ** 2, axis=-1)
    pos = (cost_pos <= cost_neg)[..., None]
    zero = np.zeros_like(pa)
    return np.concatenate([np.where(pos, pa, zero), np.where(pos, zero, pb), z], axis=-1)


def _project_nearest_q2(X: np.ndarray) -> np.ndarray:
    # For Q = 2 the centered monotone cone is the ray t (-1, 1), t >= 0.
    if X.shape[-1] != 5:
        raise UnsupportedEmbedding("expected vectors of length 5 for (Q, n) = (2, 1)")
    ta = np.maximum(0.5 * (X[..., 1] - X[..., 0]), 0.0)
    tb = np.maximum(0.5 * (X[..., 3] - X[..., 2]), 0.0)
    # |a - pa|^2 = |a|^2 - 2 ta^2, so the positive cone wins iff ta >= tb.
    pos = ta >= tb
    out = np.zeros_like(X)
    out[..., 0] = np.where(pos, -ta, 0.0)
    out[..., 1] = np.where(pos, ta, 0.0)
    out[..., 2] = np.where(pos, 0.0, -tb)
    out[..., 3] = np.where(pos, 0.0, tb)
    out[..., 4] = X[..., 4]
    return out


def varrho(p: EmbeddedPoint) -> EmbeddedPoint:
    """Retraction of an embedded point onto ``Qset``."""
    Q = p.Q
    return EmbeddedPoint.from_vector(varrho_vec(p.to_vector(), Q), Q)


def varrho_star(p: EmbeddedPoint, delta: float) -> EmbeddedPoint:
    """Cut-off retraction of an embedded point onto ``Qset``."""
    Q = p.Q
    return EmbeddedPoint.from_vector(varrho_star_vec(p.to_vector(), Q, delta), Q)


# ---------------------------------------------------------------------------
# batch conversion between atom arrays and flat coordinates


def zeta_batch(atoms: np.ndarray, sign: np.ndarray) -> np.ndarray:
    """Flat embedded coordinates of stacked special Q-points (``n = 1``).

    Parameters
    ----------
    atoms : ndarray, shape (..., Q, 1)
    sign : ndarray of {+1, -1}, shape (...)

    Returns
    -------
    ndarray, shape (..., 2Q + 1)
    """
    atoms = np.asarray(atoms, dtype=float)
    _require_n1(atoms.shape[-1])
    Q = atoms.shape[-2]
    vals = np.sort(atoms[..., 0], axis=-1)
    z = vals.mean(axis=-1, keepdims=True)
    c = vals - z
    collapsed = np.all(vals == vals[..., :1], axis=-1)
    c[collapsed] = 0.0
    pos = (np.asarray(sign) >= 0) | collapsed
    zero = np.zeros_like(c)
    a = np.where(pos[..., None], c, zero)
    b = np.where(pos[..., None], zero, c)
    return np.concatenate([a, b, np.sqrt(Q) * z], axis=-1)


def zeta_inv_batch(X: np.ndarray, Q: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of :func:`zeta_batch` for points of ``Qset``.

    Returns ``(atoms, sign)`` with atoms of shape ``(..., Q, 1)`` sorted
    ascending and collapsed values carrying sign ``+1``.  The part with
    the larger norm is used, so inputs only need to lie near ``Qset``.
    """
    a, b, zs = _split(X, Q)
    z = zs / np.sqrt(Q)
    na = np.sum(a * a, axis=-1)
    nb = np.sum(b * b, axis=-1)
    pos = na >= nb
    c = np.where(pos[..., None], a, b)
    vals = np.sort(c + z, axis=-1)
    collapsed = np.all(c == 0.0, axis=-1)
    vals = np.where(collapsed[..., None], np.broadcast_to(z, vals.shape), vals)
    collapsed |= np.all(vals == vals[..., :1], axis=-1)
    sign = np.where(pos | collapsed, 1, -1).astype(np.int8)
    return vals[..., None], sign


# ---------------------------------------------------------------------------
# Luckhaus interpolation (m = 2)


@dataclass
class LuckhausField:
    """Annulus interpolant sampled on a polar grid.

    Attributes
    ----------
    radii : ndarray, shape (J,)
        Increasing radii from ``1 - lam`` to ``1``.
    angles : ndarray, shape (K,)
        Uniform angles ``2 pi k / K``.
    X : ndarray, shape (J, K, 2Q + 1)
        Flat embedded coordinates of the interpolant.
    Q : int
    lam : float
    """

    radii: np.ndarray
    angles: np.ndarray
    X: np.ndarray
    Q: int
    lam: float

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms and signs at every grid node."""
        return zeta_inv_batch(self.X, self.Q)

    def energy(self) -> float:
        """Discrete Dirichlet energy on the annulus in polar coordinates."""
        r = self.radii
        dr = np.diff(r)
        dth = 2.0 * np.pi / len(self.angles)
        # Radial differences, weighted by the midpoint radius.
        d_rad = np.sum(np.diff(self.X, axis=0) ** 2, axis=-1)
        rmid = 0.5 * (r[1:] + r[:-1])
        e_rad = np.sum(d_rad * (rmid / dr)[:, None]) * dth
        # Angular differences, trapezoid weights in r.
        d_ang = np.sum((np.roll(self.X, -1, axis=1) - self.X) ** 2, axis=-1)
        wr = np.zeros_like(r)
        wr[:-1] += 0.5 * dr
        wr[1:] += 0.5 * dr
        e_ang = np.sum(d_ang * (wr / r)[:, None]) / dth
        return float(e_rad + e_ang)


def _as_flat(values, Q: int | None = None) -> np.ndarray:
    if isinstance(values, np.ndarray) and values.dtype != object:
        return np.asarray(values, dtype=float)
    pts = list(values)
    return np.stack([zeta(p).to_vector() for p in pts])


def circle_energy(F: np.ndarray) -> float:
    """Discrete Dirichlet energy of a sampled map on the unit circle."""
    K = F.shape[0]
    dth = 2.0 * np.pi / K
    return float(np.sum((np.roll(F, -1, axis=0) - F) ** 2) / dth)


def circle_distance2(F: np.ndarray, G: np.ndarray) -> float:
    """``int |F - G|^2`` over the unit circle by the trapezoid rule."""
    K = F.shape[0]
    return float(np.sum((F - G) ** 2) * 2.0 * np.pi / K)


def random_circle_trace(rng: np.random.Generator, K: int, Q: int = 2, modes: int = 3) -> np.ndarray:
    """Smooth random special Q-valued map on the circle, in flat coordinates.

    The value at angle ``t`` has barycenter ``z(t)`` and centered part
    ``|s(t)| d`` for a fixed centered unit vector ``d``, with sign
    ``sign(s(t))``; ``z`` and ``s`` are random trigonometric polynomials.
    The map collapses where ``s`` vanishes, so it is continuous.

    Returns
    -------
    ndarray, shape (K, 2Q + 1)
    """
    th = 2.0 * np.pi * np.arange(K) / K
    k = np.arange(1, modes + 1)
    basis = np.concatenate([np.cos(np.outer(th, k)), np.sin(np.outer(th, k))], axis=1)
    s = basis @ rng.normal(size=2 * modes) + 0.3 * rng.normal()
    z = basis @ rng.normal(size=2 * modes) / 2 + rng.normal()
    d = np.linspace(-1.0, 1.0, Q)
    d = d / np.linalg.norm(d) if Q > 1 else d * 0.0
    atoms = (z[:, None] + np.abs(s)[:, None] * d[None, :])[..., None]
    sign = np.where(s < 0, -1, 1)
    return zeta_batch(atoms, sign)


def perturbed_circle_trace(rng: np.random.Generator, K: int, Q: int = 2, amplitude: float = 0.0, modes: int = 3) -> np.ndarray:
    """A :func:`random_circle_trace` plus a smooth random offset off ``Qset``.

    The offset is a random trigonometric polynomial in every flat
    coordinate, scaled by ``amplitude``; the result is a closed Lipschitz
    curve in the ambient space near ``Qset``.
    """
    F = random_circle_trace(rng, K, Q, modes)
    th = 2.0 * np.pi * np.arange(K) / K
    k = np.arange(1, modes + 1)
    basis = np.concatenate([np.cos(np.outer(th, k)), np.sin(np.outer(th, k))], axis=1)
    return F + amplitude * (basis @ rng.normal(size=(2 * modes, F.shape[-1])))


def cutoff_energy_terms(U, Q: int, delta: float) -> tuple[float, float, float]:
    """Energies entering the estimate for the cut-off retraction on a closed curve.

    Parameters
    ----------
    U : ndarray, shape (K, 2Q + 1)
        Closed curve sampled at the angles ``2 pi k / K``.
    Q : int
    delta : float

    Returns
    -------
    (E_star, E_near, E_far)
        Edge energy of ``varrho_star o U``, and the edge energy of ``U`` split
        by whether both endpoints lie within ``delta^(Q + 1)`` of ``Qset``
        (the exponent ``nQ + 1`` with ``n = 1``).
    """
    U = np.asarray(U, dtype=float)
    dt = 2.0 * np.pi / U.shape[0]
    dist = np.linalg.norm(U - project_nearest(U, Q), axis=-1)
    near = np.maximum(dist, np.roll(dist, -1)) <= delta ** (Q + 1)
    dU = np.sum((np.roll(U, -1, axis=0) - U) ** 2, axis=-1) / dt
    V = varrho_star_vec(U, Q, delta)
    dV = np.sum((np.roll(V, -1, axis=0) - V) ** 2, axis=-1) / dt
    return float(dV.sum()), float(dU[near].sum()), float(dU[~near].sum())


def cutoff_energy_constant(U, Q: int, delta: float) -> float:
    """Smallest ``C`` with ``E_star <= (1 + C d) E_near + C E_far``, ``d = delta^(8^-Q / 8)``."""
    e_star, e_near, e_far = cutoff_energy_terms(U, Q, delta)
    d = delta ** (8.0 ** (-Q - 1))
    den = d * e_near + e_far
    if den == 0.0:
        return 0.0 if e_star <= e_near else np.inf
    return max((e_star - e_near) / den, 0.0)


def cutoff_displacement_constant(atoms: np.ndarray, sign: np.ndarray, delta: float) -> float:
    """Smallest ``C`` with ``|varrho_star(P) - P| <= C delta^(8^-Q)`` over the given points."""
    X = zeta_batch(atoms, sign)
    Q = atoms.shape[-2]
    disp = np.linalg.norm(varrho_star_vec(X, Q, delta) - X, axis=-1)
    return float(np.max(disp)) / delta ** (8.0 ** (-Q))


def luckhaus_interpolate(f, g, lam: float, n_radial: int = 16) -> LuckhausField:
    """Interpolate two traces on the unit circle across ``B_1 minus B_{1-lam}``.

    Parameters
    ----------
    f, g : sequence of SpecPoint or ndarray, length K
        Traces at the angles ``2 pi k / K`` (``m = 2``).  Arrays are taken
        as flat embedded coordinates of shape ``(K, 2Q + 1)``.
    lam : float
        Annulus width, in ``(0, 1/2)``.
    n_radial : int
        Number of radial intervals.

    Returns
    -------
    LuckhausField
        ``u(x) = varrho(t zeta(f) + (1 - t) zeta(g))`` with
        ``t = (|x| - (1 - lam)) / lam``.
    """
    if not 0.0 < lam < 0.5:
        raise ValueError("lam must lie in (0, 1/2)")
    F = _as_flat(f)
    G = _as_flat(g)
    if F.shape != G.shape:
        raise ValueError("f and g must be sampled on the same angular grid")
    Q = (F.shape[-1] - 1) // 2
    K = F.shape[0]
    radii = np.linspace(1.0 - lam, 1.0, n_radial + 1)
    t = (radii - (1.0 - lam)) / lam
    t[0], t[-1] = 0.0, 1.0
    seg = t[:, None, None] * F[None] + (1.0 - t)[:, None, None] * G[None]
    X = varrho_vec(seg, Q)
    # Endpoint weights are exactly 1 and 0; keep the traces bit-exact.
    X[-1] = F
    X[0] = G
    return LuckhausField(radii, 2.0 * np.pi * np.arange(K) / K, X, Q, lam)


def luckhaus_ratio(field: LuckhausField, f, g) -> float:
    """``Dir(u) / (lam (Dir f + Dir g) + lam^-1 int G_s(f, g)^2)``."""
    F, G = _as_flat(f), _as_flat(g)
    lam = field.lam
    denom = lam * (circle_energy(F) + circle_energy(G)) + circle_distance2(F, G) / lam
    e = field.energy()
    if denom == 0.0:
        return 0.0 if e == 0.0 else np.inf
    return e / denom


def luckhaus_constant_fit(ratios) -> tuple[float, float]:
    """Fit one constant to a set of Luckhaus energy ratios.

    Returns
    -------
    (C, spread)
        ``C`` is the geometric mean of the ratios and ``spread`` the largest
        relative deviation ``|ratio / C - 1|``.
    """
    r = np.asarray(ratios, dtype=float).ravel()
    if r.size == 0 or np.any(r <= 0.0):
        raise ValueError("ratios must be positive")
    C = float(np.exp(np.mean(np.log(r))))
    return C, float(np.max(np.abs(r / C - 1.0)))


# ---------------------------------------------------------------------------
# Lipschitz extension


def lipschitz_extend(sites, values: Sequence[SpecPoint], points) -> list[SpecPoint]:
    """Extend a map given on finitely many sites to arbitrary points.

    Each coordinate of ``zeta o f`` is extended by the McShane formula
    ``F(x) = min_j (F(b_j) + L |x - b_j|)`` with its own Lipschitz constant
    ``L``; the result is retracted with :func:`varrho`, mapped back, and
    radially projected onto ``{|P| <= max_j |f(b_j)|}``.

    Parameters
    ----------
    sites : array_like, shape (k, m)
    values : sequence of SpecPoint, length k
    points : array_like, shape (p, m)

    Returns
    -------
    list of SpecPoint, length p
    """
    sites = np.atleast_2d(np.asarray(sites, dtype=float))
    values = list(values)
    if len(values) == 0 or sites.shape[0] == 0:
        raise ValueError("cannot extend from an empty set")
    if len(values) != sites.shape[0]:
        raise ValueError("sites and values differ in length")
    points = np.atleast_2d(np.asarray(points, dtype=float))
    Q = values[0].Q
    F = np.stack([zeta(v).to_vector() for v in values])  # (k, 2Q+1)
    dsite = np.linalg.norm(sites[:, None, :] - sites[None, :, :], axis=-1)
    off = dsite > 0
    if np.any(off):
        dF = np.abs(F[:, None, :] - F[None, :, :])
        L = np.max(np.where(off[..., None], dF / np.where(off, dsite, 1.0)[..., None], 0.0), axis=(0, 1))
    else:
        L = np.zeros(F.shape[1])
    dpts = np.linalg.norm(points[:, None, :] - sites[None, :, :], axis=-1)  # (p, k)
    ext = np.min(F[None, :, :] + L[None, None, :] * dpts[..., None], axis=1)
    X = varrho_vec(ext, Q)
    atoms, sign = zeta_inv_batch(X, Q)
    M = max(norm(v.base) for v in values)
    return [cone_project(SpecPoint(atoms[i], int(sign[i])), M) for i in range(points.shape[0])]


def sampled_lipschitz(points, values: Sequence[SpecPoint]) -> float:
    """Largest difference quotient ``G_s(f(x), f(y)) / |x - y|`` over pairs."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    best = 0.0
    for i in range(len(values)):
        for j in range(i + 1, len(values)):
            d = float(np.linalg.norm(points[i] - points[j]))
            if d > 0:
                best = max(best, metric_Gs(values[i], values[j]) / d)
    return best
