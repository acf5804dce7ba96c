"""Frequency function of two-dimensional grid fields.

For a center ``x0`` and a radius ``r`` the profile records

    D(r) = energy of u on B_r(x0),
    H(r) = integral over the circle of radius r of |u|^2,
    I(r) = r D(r) / H(r)   (where H(r) > 0).

``D`` is assembled from the discrete edge energies: every edge owns the
``h x h`` square centered at its midpoint and contributes its energy
density times the exact area of that square inside the disk.  ``H`` is a
trapezoidal sum over bilinear traces.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .fields import GridField, bilinear_sample, edge_costs, edge_pairs, trace_circle

__all__ = [
    "FrequencyProfile",
    "MonotonicityReport",
    "KeyIdentityResiduals",
    "DecayReport",
    "disk_rect_area",
    "ball_energy",
    "boundary_height",
    "frequency_profile",
    "frequency_profiles",
    "default_radii",
    "check_monotone",
    "key_identity_residuals",
    "energy_decay_check",
    "poincare_constant",
    "H_ZERO_TOL",
]

#: Heights below this value leave the frequency undefined.
H_ZERO_TOL = 1e-14


# ---------------------------------------------------------------------------
# geometry


def _chord_primitive(X: np.ndarray, r: float) -> np.ndarray:
    """Antiderivative of ``sqrt(r^2 - X^2)`` on ``[-r, r]``."""
    X = np.clip(X, -r, r)
    return 0.5 * (X * np.sqrt(np.maximum(r * r - X * X, 0.0)) + r * r * np.arcsin(X / r))


def _half_strip_area(x0: np.ndarray, x1: np.ndarray, y: np.ndarray, r: float) -> np.ndarray:
    """Area of ``{x0 <= X <= x1, 0 <= Y <= y} cap B_r`` for ``y >= 0``."""
    xc = np.sqrt(np.maximum(r * r - y * y, 0.0))

    def prim(X):
        # integral from -r to X of min(y, sqrt(r^2 - t^2))
        X = np.clip(X, -r, r)
        left = _chord_primitive(np.minimum(X, -xc), r) - _chord_primitive(-r * np.ones_like(X), r)
        mid = y * (np.clip(X, -xc, xc) + xc)
        right = _chord_primitive(np.maximum(X, xc), r) - _chord_primitive(xc, r)
        return left + mid + right

    return prim(x1) - prim(x0)


def disk_rect_area(x0, x1, y0, y1, r: float) -> np.ndarray:
    """Exact area of ``[x0, x1] x [y0, y1]`` intersected with ``B_r(0)``."""
    x0, x1, y0, y1 = (np.asarray(a, dtype=float) for a in (x0, x1, y0, y1))
    if r <= 0:
        return np.zeros(np.broadcast(x0, x1, y0, y1).shape)

    def signed(y):
        return np.sign(y) * _half_strip_area(x0, x1, np.minimum(np.abs(y), r), r)

    return np.maximum(signed(y1) - signed(y0), 0.0)


# ---------------------------------------------------------------------------
# profile


def _require_2d(u: GridField) -> None:
    if u.m != 2:
        raise ValueError("frequency diagnostics are implemented for m = 2")


@dataclass
class _EdgeData:
    mid: np.ndarray  # (E, 2) midpoints relative to the center
    density: np.ndarray  # (E,) energy per unit area


def _edge_data(u: GridField, x0) -> _EdgeData:
    d = u.domain
    C = d.coords() - np.asarray(x0, dtype=float)
    mids, dens = [], []
    for k, (cost, active) in enumerate(edge_costs(u)):
        lo, hi = edge_pairs(d.shape, k)
        mid = 0.5 * (C[lo] + C[hi])
        mids.append(mid[active])
        # edge energy h^(m-2) cost spread over an h^m cell
        dens.append(cost[active] / d.h**2)
    return _EdgeData(np.concatenate(mids), np.concatenate(dens))


def _ball_energy(ed: _EdgeData, h: float, r: float) -> float:
    near = np.all(np.abs(ed.mid) <= r + h, axis=1)
    m = ed.mid[near]
    w = disk_rect_area(m[:, 0] - h / 2, m[:, 0] + h / 2, m[:, 1] - h / 2, m[:, 1] + h / 2, r)
    return float(np.sum(w * ed.density[near]))


def ball_energy(u: GridField, x0, r: float) -> float:
    """``D(r)``: energy of ``u`` on ``B_r(x0)`` with exact cell weights."""
    _require_2d(u)
    return _ball_energy(_edge_data(u, x0), u.domain.h, r)


def _samples(r: float, h: float) -> int:
    return max(64, 4 * int(math.ceil(2.0 * math.pi * r / h)))


def boundary_height(u: GridField, x0, r: float) -> float:
    """``H(r)``: trapezoidal integral of ``|u|^2`` over the circle."""
    _require_2d(u)
    tr = trace_circle(u, r, K=_samples(r, u.domain.h), center=x0)
    return float(2.0 * math.pi * r * np.mean(tr.norms2()))


@dataclass
class FrequencyProfile:
    """Frequency data of a field around a center.

    ``I`` holds NaN where ``H < H_ZERO_TOL``; ``flagged`` lists radii with
    vanishing height although the field is nonzero.
    """

    center: np.ndarray
    radii: np.ndarray
    D: np.ndarray
    H: np.ndarray
    I: np.ndarray
    h: float
    flagged: list = field(default_factory=list)

    def __post_init__(self) -> None:
        if np.any(np.diff(self.radii) <= 0):
            raise ValueError("radii must be strictly increasing")

    @property
    def defined(self) -> np.ndarray:
        return np.isfinite(self.I)

    def rows(self) -> list[tuple[float, float, float, float]]:
        return [(float(r), float(d), float(hh), float(i)) for r, d, hh, i in zip(self.radii, self.D, self.H, self.I)]

    def to_json(self) -> dict:
        return {
            "center": self.center.tolist(),
            "h": self.h,
            "r": self.radii.tolist(),
            "D": self.D.tolist(),
            "H": self.H.tolist(),
            "I": [None if not np.isfinite(v) else float(v) for v in self.I],
            "flagged": [float(r) for r in self.flagged],
        }


def default_radii(u: GridField, x0, count: int = 24) -> np.ndarray:
    """``count`` geometrically spaced radii in ``[4h, dist(x0) - 4h]``."""
    h = u.domain.h
    lo, hi = 4.0 * h, u.domain.dist_to_boundary(x0) - 4.0 * h
    if hi <= lo:
        raise ValueError("center too close to the boundary for the default radii")
    return np.geomspace(lo, hi, count)


def frequency_profile(u: GridField, x0=None, radii=None) -> FrequencyProfile:
    """Compute ``D``, ``H`` and ``I`` on a radius grid around ``x0``."""
    _require_2d(u)
    d = u.domain
    x0 = np.asarray(d.center if x0 is None else x0, dtype=float)
    radii = default_radii(u, x0) if radii is None else np.asarray(radii, dtype=float)
    limit = d.dist_to_boundary(x0)
    if np.any(radii <= 0) or np.any(radii >= limit):
        raise ValueError(f"radii must lie in (0, {limit})")
    ed = _edge_data(u, x0)
    D = np.array([_ball_energy(ed, d.h, r) for r in radii])
    H = np.array([boundary_height(u, x0, r) for r in radii])
    I = np.full(len(radii), np.nan)
    ok = H >= H_ZERO_TOL
    I[ok] = radii[ok] * D[ok] / H[ok]
    nonzero = bool(np.any(u.norms2()[d.mask] > 0))
    flagged = [float(r) for r in radii[~ok]] if nonzero else []
    return FrequencyProfile(x0, radii, D, H, I, d.h, flagged)


def frequency_profiles(u: GridField, centers, radii=None, threads: int = 1) -> list[FrequencyProfile]:
    """Profiles for several centers; the field is only read."""
    centers = [np.asarray(c, dtype=float) for c in centers]
    if threads <= 1:
        return [frequency_profile(u, c, radii) for c in centers]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(lambda c: frequency_profile(u, c, radii), centers))


# ---------------------------------------------------------------------------
# diagnostics


@dataclass
class MonotonicityReport:
    tol: float
    violations: list  # (r_k, r_k+1, drop)

    @property
    def passed(self) -> bool:
        return not self.violations

    @property
    def worst(self) -> float:
        return max((v[2] for v in self.violations), default=0.0)


#: Discretization allowance ``C`` in the default tolerance ``1e-3 + C h``.
MONOTONE_C = 1.0


def check_monotone(p: FrequencyProfile, tol: float | None = None) -> MonotonicityReport:
    """List consecutive radii where ``I`` drops by more than ``tol``."""
    if tol is None:
        tol = 1e-3 + MONOTONE_C * p.h
    r, I = p.radii[p.defined], p.I[p.defined]
    viol = []
    for k in range(len(r) - 1):
        drop = I[k] - I[k + 1]
        if drop > tol:
            viol.append((float(r[k]), float(r[k + 1]), float(drop)))
    return MonotonicityReport(float(tol), viol)


@dataclass
class KeyIdentityResiduals:
    """Residuals of the radial identities at one radius.

    ``d_prime``: ``D' - (m-2) D / r - 2 int |d_nu u|^2``;
    ``h_prime``: ``H' - (m-1) H / r - 2 D``;
    ``outer``: ``D - int <d_nu u, u>``.
    """

    r: float
    d_prime: float
    h_prime: float
    outer: float
    D: float
    H: float

    def as_tuple(self) -> tuple[float, float, float]:
        return self.d_prime, self.h_prime, self.outer


def _five_point(f, r: float, dr: float) -> float:
    return (f(r - 2 * dr) - 8 * f(r - dr) + 8 * f(r + dr) - f(r + 2 * dr)) / (12 * dr)


def key_identity_residuals(u: GridField, x0=None, r: float = 0.5, dr: float | None = None) -> KeyIdentityResiduals:
    """Check the radial derivative identities of ``D`` and ``H`` at ``r``.

    Derivatives in ``r`` use a five-point central stencil with step ``dr``
    (default ``h``); normal derivatives come from the bilinear interpolant.
    """
    _require_2d(u)
    d = u.domain
    x0 = np.asarray(d.center if x0 is None else x0, dtype=float)
    dr = d.h if dr is None else float(dr)
    limit = d.dist_to_boundary(x0)
    if r - 2 * dr < 2 * d.h or r + 2 * dr > limit - 2 * d.h:
        raise ValueError(f"radius {r} too close to the center or the boundary")
    ed = _edge_data(u, x0)
    D = _ball_energy(ed, d.h, r)
    H = boundary_height(u, x0, r)
    dD = _five_point(lambda s: _ball_energy(ed, d.h, s), r, dr)
    dH = _five_point(lambda s: boundary_height(u, x0, s), r, dr)
    K = _samples(r, d.h)
    th = 2.0 * np.pi * np.arange(K) / K
    nu = np.stack([np.cos(th), np.sin(th)], axis=-1)
    X, G = bilinear_sample(u, x0 + r * nu, grad=True)
    dnu = np.einsum("kcj,kj->kc", G, nu)
    ds = 2.0 * np.pi * r / K
    normal2 = float(np.sum(dnu * dnu) * ds)
    pairing = float(np.sum(dnu * X) * ds)
    m = u.m
    return KeyIdentityResiduals(
        float(r),
        float(dD - (m - 2) / r * D - 2.0 * normal2),
        float(dH - (m - 1) / r * H - 2.0 * D),
        float(D - pairing),
        D,
        H,
    )


@dataclass
class DecayReport:
    alpha: float | None
    passed: bool | None
    alpha_max: float
    radii: np.ndarray
    D: np.ndarray


def _decay_ok(radii, D, alpha, m, tol) -> bool:
    g = radii ** (2.0 - m - 2.0 * alpha) * D
    scale = max(float(np.max(np.abs(g))), 1e-300)
    return bool(np.all(np.diff(g) >= -tol * scale))


def energy_decay_check(u: GridField, x0=None, alpha: float | None = None, radii=None, tol: float = 1e-3) -> DecayReport:
    """Check that ``rho^(2-m-2 alpha) D(rho)`` is nondecreasing.

    Also reports the largest ``alpha`` in ``(0, 1]`` that passes, found by
    bisection (passing is preserved when ``alpha`` decreases).
    """
    _require_2d(u)
    d = u.domain
    x0 = np.asarray(d.center if x0 is None else x0, dtype=float)
    radii = default_radii(u, x0) if radii is None else np.asarray(radii, dtype=float)
    ed = _edge_data(u, x0)
    D = np.array([_ball_energy(ed, d.h, r) for r in radii])
    m = u.m
    if _decay_ok(radii, D, 1.0, m, tol):
        amax = 1.0
    elif not _decay_ok(radii, D, 1e-6, m, tol):
        amax = 0.0
    else:
        lo, hi = 1e-6, 1.0
        for _ in range(50):
            mid = 0.5 * (lo + hi)
            if _decay_ok(radii, D, mid, m, tol):
                lo = mid
            else:
                hi = mid
        amax = lo
    passed = None if alpha is None else _decay_ok(radii, D, alpha, m, tol)
    return DecayReport(alpha, passed, amax, radii, D)


def poincare_constant(p: FrequencyProfile) -> float:
    """Smallest ``C0`` with ``H(r) <= C0 r D(r)`` on the profile radii."""
    ok = p.D > 0
    if not np.any(ok):
        return 0.0 if np.all(p.H == 0) else math.inf
    return float(np.max(p.H[ok] / (p.radii[ok] * p.D[ok])))
