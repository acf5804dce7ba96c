"""Graph currents of two-valued maps over planar domains.

A :class:`SheetSpec` describes a special Q-valued map on a planar domain by
``Q`` explicit sheets (with closed-form gradients) and a sign predicate:
the map is Positive where the predicate is positive and Negative where it
is negative.  Sheets may differ between the two regions and must coincide
(collapse) on the interface.

Masses are computed by Gauss-Legendre quadrature of the area factor
``sqrt(det(I + Df^T Df))`` summed over sheets; orientation never changes
the mass.  The module also provides Plücker coordinates of graph tangent
planes, the non-oriented tilt excess, the first variation of the mass under
a vertical deformation, and reparametrization over a tilted plane.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .qpoints import batch_metric_G2

__all__ = [
    "Polynomial",
    "SheetSpec",
    "SheetSpecError",
    "Rect",
    "Disk",
    "MVector",
    "mvector",
    "nonoriented_dist2",
    "graph_mass",
    "dirichlet_integral",
    "quartic_integral",
    "taylor_mass_check",
    "subsquare_check",
    "cylindrical_excess",
    "excess_scaling_check",
    "VerticalField",
    "first_variation_graph",
    "variation_scaling_check",
    "TiltedGraph",
    "ReparametrizationError",
    "reparametrize_tilted",
    "cylinder_mass",
    "example1_spec",
    "linear_spec",
    "slope_fit",
]


class SheetSpecError(ValueError):
    """Malformed sheet description; the message names the offending entry."""


# ---------------------------------------------------------------------------
# polynomials


class Polynomial:
    """Polynomial in ``m`` variables with rational coefficients.

    Parameters
    ----------
    terms : mapping
        ``{exponent tuple: coefficient}``.
    m : int
        Number of variables.
    """

    __slots__ = ("terms", "m", "_exps", "_coefs")

    def __init__(self, terms: dict, m: int = 2) -> None:
        clean = {}
        for e, c in terms.items():
            e = tuple(int(k) for k in e)
            if len(e) != m or min(e, default=0) < 0:
                raise SheetSpecError(f"bad exponent {e} for {m} variables")
            c = Fraction(c)
            if c != 0:
                clean[e] = clean.get(e, Fraction(0)) + c
        # sorted so that evaluation order survives a JSON roundtrip
        self.terms = {e: c for e, c in sorted(clean.items()) if c != 0}
        self.m = m
        self._exps = np.array(list(self.terms), dtype=float).reshape(-1, m)
        self._coefs = np.array([float(c) for c in self.terms.values()])

    @classmethod
    def constant(cls, c, m: int = 2) -> "Polynomial":
        return cls({(0,) * m: c}, m)

    @classmethod
    def from_json(cls, data, m: int = 2, where: str = "polynomial") -> "Polynomial":
        """Parse ``{"terms": [[coef, [e1, ..., em]], ...]}`` or a number."""
        if isinstance(data, (int, float, str)) and not isinstance(data, bool):
            try:
                return cls.constant(Fraction(str(data)), m)
            except (ValueError, ZeroDivisionError) as exc:
                raise SheetSpecError(f"{where}: bad coefficient {data!r}") from exc
        if not isinstance(data, dict) or "terms" not in data:
            raise SheetSpecError(f"{where}: expected a number or an object with 'terms'")
        terms: dict = {}
        for k, item in enumerate(data["terms"]):
            loc = f"{where}.terms[{k}]"
            if not isinstance(item, (list, tuple)) or len(item) != 2:
                raise SheetSpecError(f"{loc}: expected [coefficient, exponents]")
            coef, exps = item
            try:
                c = Fraction(str(coef))
            except (ValueError, ZeroDivisionError) as exc:
                raise SheetSpecError(f"{loc}: bad coefficient {coef!r}") from exc
            if not isinstance(exps, (list, tuple)) or len(exps) != m:
                raise SheetSpecError(f"{loc}: expected {m} exponents")
            if any(not isinstance(e, int) or isinstance(e, bool) or e < 0 for e in exps):
                raise SheetSpecError(f"{loc}: exponents must be nonnegative integers")
            terms[tuple(exps)] = terms.get(tuple(exps), Fraction(0)) + c
        return cls(terms, m)

    def to_json(self) -> dict:
        return {"terms": [[str(c), list(e)] for e, c in sorted(self.terms.items())]}

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.terms:
            return np.zeros(x.shape[:-1])
        mon = np.prod(x[..., None, :] ** self._exps, axis=-1)
        return mon @ self._coefs

    def derivative(self, k: int) -> "Polynomial":
        out = {}
        for e, c in self.terms.items():
            if e[k] > 0:
                e2 = list(e)
                e2[k] -= 1
                out[tuple(e2)] = c * e[k]
        return Polynomial(out, self.m)

    def scaled(self, eps) -> "Polynomial":
        eps = Fraction(eps)
        return Polynomial({e: c * eps for e, c in self.terms.items()}, self.m)

    def __repr__(self) -> str:
        return f"Polynomial({self.to_json()['terms']})"


# ---------------------------------------------------------------------------
# sheet specifications


ValuesFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class SheetSpec:
    """Explicit special Q-valued map over a planar domain.

    Parameters
    ----------
    Q, n, m : int
    values : callable
        ``values(x, region) -> (P, Q, n)`` sheet values at points ``x`` of
        shape ``(P, m)`` for region ``+1`` or ``-1``.
    gradients : callable
        ``gradients(x, region) -> (P, Q, n, m)``.
    predicate : callable
        ``predicate(x) -> (P,)``; Positive where ``> 0``.
    """

    Q: int
    n: int
    m: int
    values: Callable
    gradients: Callable
    predicate: Callable
    source: dict | None = field(default=None, repr=False)

    # -- construction --------------------------------------------------
    @classmethod
    def from_polynomials(cls, sheets, predicate=None, negative_sheets=None, m: int = 2) -> "SheetSpec":
        """Build from nested lists ``sheets[i][j]`` of :class:`Polynomial`."""
        pos = [[p for p in row] for row in sheets]
        neg = pos if negative_sheets is None else [[p for p in row] for row in negative_sheets]
        Q, n = len(pos), len(pos[0])
        if len(neg) != Q or any(len(r) != n for r in pos + neg):
            raise SheetSpecError("every sheet must have the same number of components")
        pred = predicate if predicate is not None else Polynomial.constant(1, m)
        grads = {
            s: [[[p.derivative(k) for k in range(m)] for p in row] for row in sh]
            for s, sh in ((1, pos), (-1, neg))
        }
        table = {1: pos, -1: neg}

        def values(x, region=1):
            return np.stack([np.stack([p(x) for p in row], -1) for row in table[region]], -2)

        def gradients(x, region=1):
            g = grads[region]
            return np.stack(
                [np.stack([np.stack([d(x) for d in comp], -1) for comp in row], -2) for row in g], -3
            )

        src = {
            "Q": Q,
            "n": n,
            "m": m,
            "sheets": [[p.to_json() for p in row] for row in pos],
            "predicate": pred.to_json(),
        }
        if negative_sheets is not None:
            src["negative_sheets"] = [[p.to_json() for p in row] for row in neg]
        spec = cls(Q, n, m, values, gradients, pred, src)
        spec._polys = (pos, neg, pred)  # type: ignore[attr-defined]
        return spec

    @classmethod
    def from_json(cls, data) -> "SheetSpec":
        """Parse the JSON sheet format (see :meth:`to_json`)."""
        if isinstance(data, str):
            try:
                data = json.loads(data)
            except json.JSONDecodeError as exc:
                raise SheetSpecError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        if not isinstance(data, dict):
            raise SheetSpecError("sheet spec must be a JSON object")
        m = data.get("m", 2)
        if m != 2:
            raise SheetSpecError("only m = 2 sheet specs are supported")

        def parse_sheets(key):
            raw = data.get(key)
            if not isinstance(raw, list) or not raw:
                raise SheetSpecError(f"{key}: expected a nonempty list of sheets")
            out = []
            for i, row in enumerate(raw):
                if not isinstance(row, list):
                    row = [row]
                out.append([Polynomial.from_json(p, m, f"{key}[{i}][{j}]") for j, p in enumerate(row)])
            return out

        sheets = parse_sheets("sheets")
        neg = parse_sheets("negative_sheets") if "negative_sheets" in data else None
        if "Q" in data and data["Q"] != len(sheets):
            raise SheetSpecError(f"Q = {data['Q']} but {len(sheets)} sheets given")
        pred = Polynomial.from_json(data["predicate"], m, "predicate") if "predicate" in data else None
        return cls.from_polynomials(sheets, pred, neg, m)

    def to_json(self) -> dict:
        if self.source is None:
            raise SheetSpecError("only polynomial sheet specs can be serialized")
        return dict(self.source)

    # -- evaluation ----------------------------------------------------
    def labels(self, x: np.ndarray) -> np.ndarray:
        return np.where(self.predicate(x) < 0, -1, 1)

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Values ``(P, Q, n)``, gradients ``(P, Q, n, m)`` and labels ``(P,)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lab = self.labels(x)
        vals = np.empty((len(x), self.Q, self.n))
        grads = np.empty((len(x), self.Q, self.n, self.m))
        for s in (1, -1):
            sel = lab == s
            if np.any(sel):
                vals[sel] = self.values(x[sel], s)
                grads[sel] = self.gradients(x[sel], s)
        return vals, grads, lab

    def scaled(self, eps: float) -> "SheetSpec":
        """The map with every sheet multiplied by ``eps``."""
        if hasattr(self, "_polys"):
            pos, neg, pred = self._polys  # type: ignore[attr-defined]
            sc = lambda sh: [[p.scaled(eps) for p in row] for row in sh]
            return SheetSpec.from_polynomials(sc(pos), pred, None if neg is pos else sc(neg), self.m)
        v, g = self.values, self.gradients
        return SheetSpec(
            self.Q, self.n, self.m, lambda x, r=1: eps * v(x, r), lambda x, r=1: eps * g(x, r), self.predicate
        )

    def lipschitz(self, domain, k: int = 201) -> float:
        """Sampled ``max |Df_i|`` (Frobenius) over a ``k x k`` grid of ``domain``."""
        pts = domain.sample_grid(k)
        _, g, _ = self.evaluate(pts)
        return float(np.sqrt(np.max(np.sum(g * g, axis=(-2, -1)))))

    def sup_norm(self, domain, k: int = 201) -> float:
        pts = domain.sample_grid(k)
        v, _, _ = self.evaluate(pts)
        return float(np.max(np.sqrt(np.sum(v * v, axis=-1))))


def example1_spec(rule: str = "quadrant", scale: float = 1.0) -> SheetSpec:
    """Sheets ``{0, 3(x^2 - y^2)}`` with the quadrant or diagonal sign rule."""
    g = Polynomial({(2, 0): 3, (0, 2): -3})
    if rule == "quadrant":
        pred = Polynomial({(2, 0): 1, (0, 2): -1})
    elif rule == "diagonal":
        pred = Polynomial({(1, 0): 1, (0, 1): -1})
    else:
        raise ValueError(f"unknown sign rule {rule!r}")
    spec = SheetSpec.from_polynomials([[Polynomial({})], [g]], pred)
    return spec if scale == 1.0 else spec.scaled(scale)


def linear_spec(a: Sequence[float], Q: int = 2, b: float = 0.0) -> SheetSpec:
    """Single-valued ``Q[[a . x + b]]`` (``n = 1``)."""
    p = Polynomial({(0, 0): Fraction(b), (1, 0): Fraction(a[0]), (0, 1): Fraction(a[1])})
    return SheetSpec.from_polynomials([[p] for _ in range(Q)])


# ---------------------------------------------------------------------------
# domains and quadrature


def _gauss(order: int) -> tuple[np.ndarray, np.ndarray]:
    if order < 1:
        raise ValueError("quadrature order must be at least 1")
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _panel_rule(a: float, b: float, order: int, panels: int, breaks=()) -> tuple[np.ndarray, np.ndarray]:
    edges = np.unique(np.concatenate([np.linspace(a, b, panels + 1), [t for t in breaks if a < t < b]]))
    x, w = _gauss(order)
    L = np.diff(edges)
    pts = (edges[:-1, None] + L[:, None] * x[None, :]).ravel()
    wts = (L[:, None] * w[None, :]).ravel()
    return pts, wts


@dataclass(frozen=True)
class Rect:
    """Axis-aligned rectangle ``[x0, x1] x [y0, y1]``."""

    x0: float = 0.0
    x1: float = 1.0
    y0: float = 0.0
    y1: float = 1.0

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def quadrature(self, order: int = 6, panels: int = 8, breaks_x=(), breaks_y=()):
        px, wx = _panel_rule(self.x0, self.x1, order, panels, breaks_x)
        py, wy = _panel_rule(self.y0, self.y1, order, panels, breaks_y)
        X, Y = np.meshgrid(px, py, indexing="ij")
        W = np.outer(wx, wy)
        return np.stack([X.ravel(), Y.ravel()], -1), W.ravel()

    def sample_grid(self, k: int) -> np.ndarray:
        X, Y = np.meshgrid(np.linspace(self.x0, self.x1, k), np.linspace(self.y0, self.y1, k), indexing="ij")
        return np.stack([X.ravel(), Y.ravel()], -1)


@dataclass(frozen=True)
class Disk:
    """Disk ``B_radius(center)``."""

    radius: float = 1.0
    center: tuple = (0.0, 0.0)

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    def quadrature(self, order: int = 6, panels: int = 8, angle_breaks=()):
        """Polar product rule; angular panels are split at ``angle_breaks``."""
        pr, wr = _panel_rule(0.0, self.radius, order, panels)
        pt, wt = _panel_rule(0.0, 2.0 * math.pi, order, 4 * panels, [b % (2 * math.pi) for b in angle_breaks])
        R, T = np.meshgrid(pr, pt, indexing="ij")
        W = np.outer(wr * pr, wt)
        c = np.asarray(self.center, dtype=float)
        pts = np.stack([c[0] + R.ravel() * np.cos(T.ravel()), c[1] + R.ravel() * np.sin(T.ravel())], -1)
        return pts, W.ravel()

    def sample_grid(self, k: int) -> np.ndarray:
        r = self.radius
        X, Y = np.meshgrid(np.linspace(-r, r, k), np.linspace(-r, r, k), indexing="ij")
        keep = X**2 + Y**2 <= r * r
        c = np.asarray(self.center)
        return np.stack([X[keep], Y[keep]], -1) + c


def _interface_angles(spec: SheetSpec, domain: Disk, samples: int = 720) -> list[float]:
    """Angles where the predicate changes sign on the circle of half radius."""
    c = np.asarray(domain.center, dtype=float)
    rr = 0.5 * domain.radius
    th = 2.0 * math.pi * np.arange(samples + 1) / samples

    def p(t):
        t = np.atleast_1d(t)
        return spec.predicate(c + rr * np.stack([np.cos(t), np.sin(t)], -1))

    v = p(th)
    out = []
    for k in np.flatnonzero(np.sign(v[:-1]) * np.sign(v[1:]) < 0):
        a, b = th[k], th[k + 1]
        fa = v[k]
        for _ in range(60):
            mid = 0.5 * (a + b)
            fm = p(mid)[0]
            if np.sign(fm) == np.sign(fa):
                a, fa = mid, fm
            else:
                b = mid
        out.append(0.5 * (a + b))
    out.extend(float(t) for t in th[:-1][v[:-1] == 0])
    return sorted(out)


def _rule(spec: SheetSpec, domain, order: int, panels: int):
    if isinstance(domain, Disk):
        return domain.quadrature(order, panels, _interface_angles(spec, domain))
    if isinstance(domain, Rect):
        return domain.quadrature(order, panels)
    raise TypeError("domain must be a Rect or a Disk")


# ---------------------------------------------------------------------------
# mass


def _area_factor(G: np.ndarray) -> np.ndarray:
    """``sqrt(det(I + G^T G))`` for gradients of shape ``(..., n, m)``."""
    m = G.shape[-1]
    M = np.eye(m) + np.einsum("...ij,...ik->...jk", G, G)
    return np.sqrt(np.linalg.det(M))


def graph_mass(spec: SheetSpec, domain, order: int = 6, panels: int = 8) -> float:
    """Mass of the graph current: sum over sheets of the area integral."""
    pts, w = _rule(spec, domain, order, panels)
    _, G, _ = spec.evaluate(pts)
    return float(np.sum(_area_factor(G).sum(axis=-1) * w))


def dirichlet_integral(spec: SheetSpec, domain, order: int = 6, panels: int = 8) -> float:
    """``int sum_i |Df_i|^2``."""
    pts, w = _rule(spec, domain, order, panels)
    _, G, _ = spec.evaluate(pts)
    return float(np.sum(np.sum(G * G, axis=(-3, -2, -1)) * w))


def quartic_integral(spec: SheetSpec, domain, order: int = 6, panels: int = 8) -> float:
    """``int sum_i |Df_i|^4``."""
    pts, w = _rule(spec, domain, order, panels)
    _, G, _ = spec.evaluate(pts)
    return float(np.sum(np.sum(np.sum(G * G, axis=(-2, -1)) ** 2, axis=-1) * w))


def slope_fit(eps, values) -> float:
    """Least-squares slope of ``log values`` against ``log eps``."""
    eps, values = np.asarray(eps, dtype=float), np.asarray(values, dtype=float)
    if len(eps) < 3:
        raise ValueError("need at least 3 scales for an order fit")
    if np.any(values <= 0):
        return math.nan
    return float(np.polyfit(np.log(eps), np.log(values), 1)[0])


@dataclass
class TaylorReport:
    eps: np.ndarray
    remainder: np.ndarray
    slope: float
    bound_constant: float  # max Rem / int |Df|^4


def _taylor_remainder(spec, domain, order, panels) -> tuple[float, float]:
    pts, w = _rule(spec, domain, order, panels)
    _, G, _ = spec.evaluate(pts)
    n2 = np.sum(G * G, axis=(-2, -1))  # (P, Q)
    # sqrt(det(I + G^T G)) - 1 - |G|^2 / 2, summed over sheets
    J = _area_factor(G)
    rem = np.sum(np.sum(J - 1.0 - 0.5 * n2, axis=-1) * w)
    quart = np.sum(np.sum(n2 * n2, axis=-1) * w)
    return abs(float(rem)), float(quart)


def taylor_mass_check(spec: SheetSpec, eps_list, domain=None, order: int = 6, panels: int = 8) -> TaylorReport:
    """Order fit of ``|mass(eps f) - Q|Omega| - Dir(eps f) / 2|`` in ``eps``.

    The remainder is accumulated pointwise, so no large cancellation
    against ``Q |Omega|`` takes place.
    """
    domain = Disk() if domain is None else domain
    eps = np.asarray(eps_list, dtype=float)
    if len(eps) < 3:
        raise ValueError("need at least 3 values of eps")
    rem, quart = zip(*(_taylor_remainder(spec.scaled(e), domain, order, panels) for e in eps))
    rem, quart = np.array(rem), np.array(quart)
    ok = quart > 0
    C = float(np.max(rem[ok] / quart[ok])) if np.any(ok) else 0.0
    slope = slope_fit(eps, rem) if np.all(rem > 0) else math.nan
    return TaylorReport(eps, rem, slope, C)


@dataclass
class SubsquareReport:
    squares: list
    constants: np.ndarray  # (squares, eps) Rem / int |Df|^4
    slopes: np.ndarray  # per square


def subsquare_check(spec: SheetSpec, squares: Sequence[Rect], eps_list, order: int = 6, panels: int = 4) -> SubsquareReport:
    """Remainder of the mass expansion on sub-squares, with fitted constants."""
    eps = np.asarray(eps_list, dtype=float)
    C = np.zeros((len(squares), len(eps)))
    slopes = np.zeros(len(squares))
    for i, E in enumerate(squares):
        rem = []
        for k, e in enumerate(eps):
            r, q = _taylor_remainder(spec.scaled(e), E, order, panels)
            rem.append(r)
            C[i, k] = r / q if q > 0 else 0.0
        slopes[i] = slope_fit(eps, rem)
    return SubsquareReport(list(squares), C, slopes)


# ---------------------------------------------------------------------------
# tangent planes


@dataclass(frozen=True)
class MVector:
    """Unit simple m-vector of a graph tangent plane in Plücker coordinates.

    ``coords[..., k]`` is the minor of ``[I; Df]`` on the row set
    ``combos[k]``, divided by the area factor.
    """

    coords: np.ndarray
    combos: tuple

    def __neg__(self) -> "MVector":
        return MVector(-self.coords, self.combos)


@lru_cache(maxsize=None)
def _combos(m: int, n: int) -> tuple:
    return tuple(itertools.combinations(range(m + n), m))


def mvector(G: np.ndarray) -> MVector:
    """Oriented unit tangent m-vector of the graph of a map with gradient ``G``.

    Parameters
    ----------
    G : ndarray, shape (..., n, m)
    """
    G = np.asarray(G, dtype=float)
    n, m = G.shape[-2:]
    eye = np.broadcast_to(np.eye(m), G.shape[:-2] + (m, m))
    M = np.concatenate([eye, G], axis=-2)  # (..., m+n, m)
    combos = _combos(m, n)
    minors = np.stack([np.linalg.det(M[..., list(c), :]) for c in combos], axis=-1)
    return MVector(minors / _area_factor(G)[..., None], combos)


def nonoriented_dist2(v: MVector, tau: MVector) -> np.ndarray:
    """``min(|v - tau|^2, |v + tau|^2)``."""
    a = np.sum((v.coords - tau.coords) ** 2, axis=-1)
    b = np.sum((v.coords + tau.coords) ** 2, axis=-1)
    return np.minimum(a, b)


# ---------------------------------------------------------------------------
# excess


@dataclass
class ExcessResult:
    lhs: float
    rhs: float
    remainder: float
    L: np.ndarray


def cylindrical_excess(spec: SheetSpec, s: float = 1.0, L=None, center=(0.0, 0.0), order: int = 6, panels: int = 8) -> ExcessResult:
    """Non-oriented tilt excess against the plane of ``L`` and its gradient proxy.

    ``lhs = int sum_i |v_i - tau|_no^2 J_i`` over ``B_s`` and
    ``rhs = int G(Df, Q[[L]])^2``; ``L`` defaults to the mean gradient of
    the barycenter map.
    """
    dom = Disk(s, tuple(center))
    pts, w = _rule(spec, dom, order, panels)
    _, G, _ = spec.evaluate(pts)
    if L is None:
        L = np.sum(G.mean(axis=1) * w[:, None, None], axis=0) / np.sum(w)
    L = np.asarray(L, dtype=float).reshape(spec.n, spec.m)
    tau = mvector(L)
    v = mvector(G)
    d2 = nonoriented_dist2(v, MVector(tau.coords[None, None, :], tau.combos))
    lhs = float(np.sum(np.sum(d2 * _area_factor(G), axis=-1) * w))
    P, Q = G.shape[:2]
    flat = G.reshape(P, Q, 1, -1)
    target = np.broadcast_to(L.reshape(1, 1, 1, -1), flat.shape)
    rhs = float(np.sum(batch_metric_G2(flat[:, :, 0, :], target[:, :, 0, :]) * w))
    return ExcessResult(lhs, rhs, abs(lhs - rhs), L)


def excess_scaling_check(spec: SheetSpec, eps_list, s: float = 1.0, order: int = 6, panels: int = 8):
    """Remainders of :func:`cylindrical_excess` under ``f -> eps f`` and their slope."""
    rem = np.array([cylindrical_excess(spec.scaled(e), s, None, order=order, panels=panels).remainder for e in eps_list])
    return rem, slope_fit(eps_list, rem)


# ---------------------------------------------------------------------------
# first variation


@dataclass
class VerticalField:
    """Test map ``zeta(x, y) = phi(x) (c0 + c1 y)`` with a polynomial bump ``phi``.

    ``phi(x) = (1 - |x - center|^2 / radius^2)^4`` inside the ball and 0
    outside, so ``zeta`` is C^3 and compactly supported in ``x``.
    """

    center: tuple = (0.0, 0.0)
    radius: float = 0.5
    c0: float = 1.0
    c1: float = 0.0

    def _phi(self, x):
        d = x - np.asarray(self.center)
        s = 1.0 - np.sum(d * d, axis=-1) / self.radius**2
        inside = s > 0
        phi = np.where(inside, s, 0.0) ** 4
        dphi = np.where(inside, s, 0.0)[..., None] ** 3 * 4.0 * (-2.0 * d / self.radius**2)
        return phi, dphi

    def __call__(self, x: np.ndarray, y: np.ndarray):
        """Return ``zeta``, ``D_x zeta`` and ``D_y zeta`` for ``n = 1`` sheets.

        ``x`` has shape ``(P, 2)`` and ``y`` shape ``(P, Q, 1)``; outputs
        have shapes ``(P, Q, 1)``, ``(P, Q, 1, 2)`` and ``(P, Q, 1, 1)``.
        """
        phi, dphi = self._phi(x)
        lin = self.c0 + self.c1 * y
        z = phi[:, None, None] * lin
        dx = dphi[:, None, None, :] * lin[..., None]
        dy = np.broadcast_to((phi * self.c1)[:, None, None, None], y.shape + (1,))
        return z, dx, dy


@dataclass
class VariationResult:
    numeric: float
    formula: float
    error: float
    weight: float  # int |D zeta| |Df|^3
    constant: float  # error / weight


def first_variation_graph(
    spec: SheetSpec,
    zeta: VerticalField,
    domain=None,
    order: int = 6,
    panels: int = 8,
    steps=(1e-3, 5e-4),
) -> VariationResult:
    """First variation of the mass under ``f_i -> f_i + t zeta(x, f_i)``.

    The numeric value is a Richardson-extrapolated central difference of
    the deformed mass; the formula value is
    ``int sum_i (D_x zeta + D_y zeta Df_i) : Df_i``.
    """
    domain = Disk() if domain is None else domain
    if spec.n != 1:
        raise ValueError("first variation is implemented for n = 1")
    c = np.asarray(zeta.center, dtype=float)
    if isinstance(domain, Disk):
        gap = domain.radius - np.linalg.norm(c - np.asarray(domain.center))
    else:
        gap = min(c[0] - domain.x0, domain.x1 - c[0], c[1] - domain.y0, domain.y1 - c[1])
    if zeta.radius >= gap:
        raise ValueError("support of the test map touches the domain boundary")
    pts, w = _rule(spec, domain, order, panels)
    vals, G, _ = spec.evaluate(pts)
    _, dx, dy = zeta(pts, vals)
    A = dx + dy * G  # derivative of the deformed gradient in t, (P, Q, 1, 2)

    def mass(t):
        return float(np.sum(_area_factor(G + t * A).sum(axis=-1) * w))

    def central(t):
        # mass(t) - mass(-t) via pointwise differences to limit cancellation
        diff = _area_factor(G + t * A) - _area_factor(G - t * A)
        return float(np.sum(diff.sum(axis=-1) * w)) / (2.0 * t)

    t1, t2 = steps
    d1, d2 = central(t1), central(t2)
    r = (t1 / t2) ** 2
    numeric = (r * d2 - d1) / (r - 1.0)
    formula = float(np.sum(np.sum(A * G, axis=(-3, -2, -1)) * w))
    gnorm = np.sqrt(np.sum(G * G, axis=(-2, -1)))
    Dz = np.sqrt(np.sum(dx * dx, axis=(-2, -1)) + np.sum(dy * dy, axis=(-2, -1)))
    weight = float(np.sum(np.sum(Dz * gnorm**3, axis=-1) * w))
    err = abs(numeric - formula)
    return VariationResult(numeric, formula, err, weight, err / weight if weight > 0 else 0.0)


def variation_scaling_check(spec: SheetSpec, zeta: VerticalField, eps_list, domain=None, **kw):
    """Discrepancies of :func:`first_variation_graph` under ``f -> eps f``."""
    res = [first_variation_graph(spec.scaled(e), zeta, domain, **kw) for e in eps_list]
    err = np.array([r.error for r in res])
    return res, slope_fit(eps_list, err)


# ---------------------------------------------------------------------------
# tilted reparametrization (m = 2, n = 1)


class ReparametrizationError(RuntimeError):
    """The crossing equation could not be solved at a node."""

    def __init__(self, msg: str, node=None) -> None:
        super().__init__(msg)
        self.node = node


def _crossing(fn, t1, t2, theta, bound, newton: int = 3):
    """Solve ``x cos(theta) + f(x, t2) sin(theta) = t1`` for ``x`` per point.

    ``fn(x, t2) -> (value, d/dx value)``.  Bisection on the bracket
    ``t1 / cos(theta) +- bound`` followed by Newton steps.
    """
    c, s = math.cos(theta), math.sin(theta)
    lo = t1 / c - bound
    hi = t1 / c + bound

    def F(x):
        v, _ = fn(x, t2)
        return x * c + v * s - t1

    flo, fhi = F(lo), F(hi)
    bad = ~((flo <= 0) & (fhi >= 0))
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        raise ReparametrizationError(
            f"no bracketed crossing at node ({t1[k]:.6g}, {t2[k]:.6g}); tilt or slope too large", (float(t1[k]), float(t2[k]))
        )
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        up = fm > 0
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    x = 0.5 * (lo + hi)
    for _ in range(newton):
        v, dv = fn(x, t2)
        den = c + dv * s
        if np.any(den <= 0):
            k = int(np.flatnonzero(den <= 0)[0])
            raise ReparametrizationError(f"crossing not transversal at node ({t1[k]:.6g}, {t2[k]:.6g})", (float(t1[k]), float(t2[k])))
        x = x - (x * c + v * s - t1) / den
    return x


@dataclass
class TiltedGraph:
    """Sheets of a graph re-expressed over a plane tilted by ``theta``.

    The plane is spanned by ``(cos theta, 0, sin theta)`` and ``(0, 1, 0)``;
    the normal direction is ``(-sin theta, 0, cos theta)``.
    """

    spec: SheetSpec
    theta: float
    bound: float

    def _sheet_fn(self, i: int, region: int):
        def fn(x, t2):
            p = np.stack([x, t2], -1)
            v = self.spec.values(p, region)[:, i, 0]
            g = self.spec.gradients(p, region)[:, i, 0, 0]
            return v, g

        return fn

    def _bary_fn(self):
        def fn(x, t2):
            p = np.stack([x, t2], -1)
            v, g, _ = self.spec.evaluate(p)
            return v[:, :, 0].mean(axis=1), g[:, :, 0, 0].mean(axis=1)

        return fn

    def evaluate(self, t: np.ndarray):
        """Values ``(P, Q)``, gradients ``(P, Q, 2)``, signs and footpoints at ``t``."""
        t = np.atleast_2d(np.asarray(t, dtype=float))
        t1, t2 = t[:, 0], t[:, 1]
        c, s = math.cos(self.theta), math.sin(self.theta)
        xb = _crossing(self._bary_fn(), t1, t2, self.theta, self.bound)
        foot = np.stack([xb, t2], -1)
        region = self.spec.labels(foot)
        Q = self.spec.Q
        vals = np.empty((len(t), Q))
        grads = np.empty((len(t), Q, 2))
        for reg in (1, -1):
            sel = region == reg
            if not np.any(sel):
                continue
            for i in range(Q):
                x1 = _crossing(self._sheet_fn(i, reg), t1[sel], t2[sel], self.theta, self.bound)
                p = np.stack([x1, t2[sel]], -1)
                f = self.spec.values(p, reg)[:, i, 0]
                g = self.spec.gradients(p, reg)[:, i, 0, :]
                den = c + g[:, 0] * s
                vals[sel, i] = -x1 * s + f * c
                grads[sel, i, 0] = (g[:, 0] * c - s) / den
                grads[sel, i, 1] = g[:, 1] / den
        return vals, grads, region, foot

    def mass(self, s: float, order: int = 6, panels: int = 8) -> float:
        """Mass of the reparametrized graph over ``B_s`` of the tilted plane."""
        pts, w = Disk(s).quadrature(order, panels)
        _, g, _, _ = self.evaluate(pts)
        return float(np.sum(np.sqrt(1.0 + np.sum(g * g, axis=-1)).sum(axis=-1) * w))


@dataclass
class Reparametrization:
    nodes: np.ndarray  # (P, 2) nodes of B_s in the tilted plane
    values: np.ndarray  # (P, Q)
    sign: np.ndarray  # (P,)
    footpoints: np.ndarray
    graph: TiltedGraph
    sup_constant: float
    lip_constant: float


def reparametrize_tilted(spec: SheetSpec, theta: float, s: float, h: float = 1 / 32, domain=None) -> Reparametrization:
    """Express the graph of ``spec`` over the plane tilted by ``theta``.

    Returns the reparametrized values on the lattice nodes of ``B_s`` in
    the tilted plane, together with the sampled constants of the bounds
    ``|g| <= C (s |pi - pi0| + |f|)`` and ``Lip(g) <= C (|pi - pi0| + Lip f)``.
    """
    if spec.m != 2 or spec.n != 1:
        raise ValueError("tilted reparametrization supports m = 2, n = 1")
    domain = Disk() if domain is None else domain
    sup_f = spec.sup_norm(domain)
    lip_f = spec.lipschitz(domain)
    tilt = math.sqrt(2.0) * abs(math.sin(theta))
    bound = 2.0 * (sup_f + s * tilt) + 1e-12
    graph = TiltedGraph(spec, float(theta), bound)
    k = int(round(s / h))
    ax = h * np.arange(-k, k + 1)
    X, Y = np.meshgrid(ax, ax, indexing="ij")
    keep = X**2 + Y**2 <= s * s * (1 + 1e-12)
    nodes = np.stack([X[keep], Y[keep]], -1)
    vals, grads, sign, foot = graph.evaluate(nodes)
    sup_g = float(np.max(np.abs(vals))) if len(vals) else 0.0
    lip_g = float(np.max(np.sqrt(np.sum(grads * grads, axis=-1)))) if len(vals) else 0.0
    C0 = sup_g / (s * tilt + sup_f) if s * tilt + sup_f > 0 else 0.0
    C1 = lip_g / (tilt + lip_f) if tilt + lip_f > 0 else 0.0
    return Reparametrization(nodes, vals, sign, foot, graph, C0, C1)


def cylinder_mass(spec: SheetSpec, theta: float, s: float, n_angle: int = 256, order: int = 16, panels: int = 4) -> float:
    """Mass of the graph of ``spec`` inside the cylinder over ``B_s`` of the tilted plane.

    Integrated in the original coordinates: for each sheet the preimage of
    the cylinder is star-shaped about the preimage of its axis, so it is
    integrated in polar coordinates with the boundary radius found by
    bisection along each ray.
    """
    if spec.m != 2 or spec.n != 1:
        raise ValueError("cylinder mass supports m = 2, n = 1")
    c, sn = math.cos(theta), math.sin(theta)
    th = 2.0 * math.pi * np.arange(n_angle) / n_angle
    dirs = np.stack([np.cos(th), np.sin(th)], -1)
    xr, wr = _panel_rule(0.0, 1.0, order, panels)
    total = 0.0
    for i in range(spec.Q):

        def sheet(p):
            v, g, _ = spec.evaluate(p)
            return v[:, i, 0], g[:, i, 0, :]

        # preimage of the cylinder axis on sheet i: x2 = 0, x1 c + f sn = 0
        a, b = -2.0, 2.0
        for _ in range(100):
            mid = 0.5 * (a + b)
            v, _ = sheet(np.array([[mid, 0.0]]))
            if mid * c + v[0] * sn > 0:
                b = mid
            else:
                a = mid
        x0 = np.array([0.5 * (a + b), 0.0])

        def proj2(p):
            v, _ = sheet(p)
            return (p[:, 0] * c + v * sn) ** 2 + p[:, 1] ** 2

        lo = np.zeros(n_angle)
        hi = np.full(n_angle, 2.0 * s)
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            inside = proj2(x0 + mid[:, None] * dirs) < s * s
            lo = np.where(inside, mid, lo)
            hi = np.where(inside, hi, mid)
        rho = 0.5 * (lo + hi)
        r = rho[:, None] * xr[None, :]
        pts = x0 + r[..., None] * dirs[:, None, :]
        _, g = sheet(pts.reshape(-1, 2))
        J = np.sqrt(1.0 + np.sum(g * g, axis=-1)).reshape(r.shape)
        total += float(np.sum(J * r * rho[:, None] * wr[None, :]) * (2.0 * math.pi / n_angle))
    return total
