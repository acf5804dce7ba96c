"""Special Q-points: signed Q-points glued along collapsed values.

A special Q-point is a pair ``(S, sign)`` with ``S`` a :class:`QPoint` and
``sign`` in ``{+1, -1}``.  Two copies of the classical space are glued
along the collapsed points ``Q[[p]]``, which therefore carry no sign; we
normalize their stored sign to ``+1`` at construction time.

The triple representation ``(v, w, z)`` splits a point into its centered
positive part ``v``, its centered negative part ``w`` (at most one of the
two is nonzero) and its barycenter ``z``.  In this representation the
metric is the product metric ``sqrt(G(v,v')^2 + G(w,w')^2 + Q|z-z'|^2)``.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np

from .qpoints import (
    DimensionMismatch,
    QPoint,
    as_qpoint,
    eta,
    metric_G,
    norm,
    sep,
    translate,
)

__all__ = [
    "SpecPoint",
    "TripleForm",
    "RegionLabel",
    "CompatibilityViolation",
    "metric_Gs",
    "iota",
    "iota_inv",
    "classify",
    "join_triple",
    "cone_scale",
    "cone_project",
    "plus_part",
    "minus_part",
    "spec_norm",
    "COMPAT_TOL",
    "TRIPLE_TOL",
]

#: Absolute tolerance of the barycenter compatibility condition.
COMPAT_TOL = 1e-9
#: Tolerance on ``min(|v|, |w|)`` accepted by :func:`iota_inv`.
TRIPLE_TOL = 1e-9


class CompatibilityViolation(ValueError):
    """A (g+, g-, g) triple does not satisfy the gluing conditions."""


class RegionLabel(enum.IntEnum):
    """Which part of the canonical decomposition a value belongs to."""

    Negative = -1
    Collapsed = 0
    Positive = 1


class SpecPoint:
    """A special Q-point ``(base, sign)``.

    Parameters
    ----------
    base : QPoint or array_like
        The unordered atoms.
    sign : {+1, -1}
        Orientation.  Ignored (stored as ``+1``) when ``base`` is collapsed.
    """

    __slots__ = ("_base", "_sign")

    def __init__(self, base, sign: int = 1) -> None:
        base = as_qpoint(base)
        sign = int(sign)
        if sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if base.is_collapsed():
            sign = 1
        self._base = base
        self._sign = sign

    @property
    def base(self) -> QPoint:
        return self._base

    @property
    def sign(self) -> int:
        return self._sign

    @property
    def Q(self) -> int:
        return self._base.Q

    @property
    def n(self) -> int:
        return self._base.n

    @property
    def atoms(self) -> np.ndarray:
        return self._base.atoms

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SpecPoint):
            return NotImplemented
        return self._sign == other._sign and self._base == other._base

    def __hash__(self) -> int:
        return hash((self._sign, self._base))

    def __repr__(self) -> str:
        return f"SpecPoint({self._base.atoms.tolist()}, sign={self._sign:+d})"

    def is_collapsed(self) -> bool:
        return self._base.is_collapsed()

    def to_json(self) -> dict:
        return {"sign": self._sign, "atoms": self._base.atoms.tolist()}

    @classmethod
    def from_json(cls, data) -> "SpecPoint":
        if isinstance(data, str):
            data = json.loads(data)
        try:
            return cls(data["atoms"], data.get("sign", 1))
        except (KeyError, TypeError) as exc:
            raise ValueError(f"malformed SpecPoint record: {data!r}") from exc


@dataclass(frozen=True)
class TripleForm:
    """Product representation ``(v, w, z)`` of a special Q-point."""

    v: QPoint
    w: QPoint
    z: np.ndarray

    def __post_init__(self) -> None:
        if self.v.atoms.shape != self.w.atoms.shape:
            raise DimensionMismatch("v and w must share (Q, n)")
        z = np.atleast_1d(np.asarray(self.z, dtype=float))
        if z.shape != (self.v.n,):
            raise DimensionMismatch(f"z has shape {z.shape}, expected ({self.v.n},)")
        object.__setattr__(self, "z", z)
        for name, part in (("v", self.v), ("w", self.w)):
            scale = max(1.0, norm(part))
            if np.any(np.abs(eta(part)) > 1e-12 * scale):
                raise ValueError(f"{name} must have zero barycenter")

    @property
    def Q(self) -> int:
        return self.v.Q


def metric_Gs(P: SpecPoint, R: SpecPoint) -> float:
    """Distance between two special Q-points."""
    if P.base.atoms.shape != R.base.atoms.shape:
        raise DimensionMismatch("special Q-points have different (Q, n)")
    if P.sign == R.sign:
        return metric_G(P.base, R.base)
    eP, eR = eta(P.base), eta(R.base)
    cP = P.atoms - eP
    cR = R.atoms - eR
    d = eP - eR
    total = np.sum(cP * cP) + np.sum(cR * cR) + P.Q * float(d @ d)
    return float(np.sqrt(total))


def iota(P: SpecPoint) -> TripleForm:
    """Triple representation ``(v, w, z)`` of ``P``."""
    z = eta(P.base)
    centered = translate(P.base, z, -1)
    zero = QPoint.collapsed(np.zeros(P.n), P.Q)
    if P.is_collapsed():
        # Exact zeros avoid spurious roundoff in the centered part.
        return TripleForm(zero, zero, z)
    if P.sign == 1:
        return TripleForm(centered, zero, z)
    return TripleForm(zero, centered, z)


def iota_inv(T: TripleForm) -> SpecPoint:
    """Inverse of :func:`iota`."""
    nv, nw = norm(T.v), norm(T.w)
    if min(nv, nw) > TRIPLE_TOL:
        raise ValueError(f"not a valid triple: min(|v|, |w|) = {min(nv, nw):.3e}")
    if nw <= nv:
        return SpecPoint(translate(T.v, T.z, 1), 1)
    return SpecPoint(translate(T.w, T.z, 1), -1)


def classify(P: SpecPoint) -> RegionLabel:
    """Region label of ``P``: Positive, Negative or Collapsed."""
    if sep(P.base) == 0.0:
        return RegionLabel.Collapsed
    return RegionLabel.Positive if P.sign == 1 else RegionLabel.Negative


def plus_part(P: SpecPoint) -> QPoint:
    """``v + z``: the base of a Positive point, ``Q[[eta]]`` otherwise."""
    if P.sign == 1 or P.is_collapsed():
        return P.base
    return QPoint.collapsed(eta(P.base), P.Q)


def minus_part(P: SpecPoint) -> QPoint:
    """``w + z``: the base of a Negative point, ``Q[[eta]]`` otherwise."""
    if P.sign == -1 or P.is_collapsed():
        return P.base
    return QPoint.collapsed(eta(P.base), P.Q)


def join_triple(gplus, gminus, g) -> SpecPoint:
    """Glue a compatible triple ``(g+, g-, g)`` into a special Q-point."""
    gplus, gminus = as_qpoint(gplus), as_qpoint(gminus)
    if gplus.atoms.shape != gminus.atoms.shape:
        raise DimensionMismatch("g+ and g- must share (Q, n)")
    g = np.atleast_1d(np.asarray(g, dtype=float))
    sp, sm = sep(gplus), sep(gminus)
    if sp != 0.0 and sm != 0.0:
        raise CompatibilityViolation(f"both separations are positive ({sp:.3g}, {sm:.3g})")
    if sp == 0.0 and np.max(np.abs(g - eta(gplus))) > COMPAT_TOL:
        raise CompatibilityViolation("barycenter of the collapsed g+ differs from g")
    if sm == 0.0 and np.max(np.abs(g - eta(gminus))) > COMPAT_TOL:
        raise CompatibilityViolation("barycenter of the collapsed g- differs from g")
    if sm == 0.0:
        return SpecPoint(gplus, 1)
    return SpecPoint(gminus, -1)


def spec_norm(P: SpecPoint) -> float:
    """``|P|``, the distance to ``Q[[0]]``."""
    return norm(P.base)


def cone_scale(P: SpecPoint, lam: float) -> SpecPoint:
    """Multiply every atom by ``lam >= 0``, keeping the sign."""
    if lam < 0:
        raise ValueError("scale factor must be nonnegative")
    return SpecPoint(QPoint(P.atoms * lam), P.sign)


def cone_project(P: SpecPoint, M: float) -> SpecPoint:
    """Radial projection onto the ball ``{|P| <= M}``."""
    if M < 0:
        raise ValueError("radius must be nonnegative")
    r = spec_norm(P)
    if r <= M:
        return P
    return cone_scale(P, M / r)
