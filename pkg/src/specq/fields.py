"""Grid fields with values in special Q-points.

A :class:`GridDomain` is a uniform lattice of spacing ``h`` masked to a
square ``[-L, L]^m`` or a disk (``m = 2``).  A :class:`GridField` stores,
for every lattice node, ``Q`` atoms in ``R^n`` and a sign.  The discrete
Dirichlet energy is the edge sum

    E_h(u) = h^(m-2) * sum over axis-adjacent active pairs of G_s(u(a), u(b))^2.

Arrays are indexed ``[i_1, ..., i_m]`` with axis ``k`` along coordinate
``x_k`` (``numpy.meshgrid(..., indexing="ij")``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.spatial import cKDTree

from .embedret import _require_n1, varrho_vec, zeta_batch, zeta_inv_batch
from .qpoints import batch_metric_G2
from .specpoints import RegionLabel, SpecPoint

__all__ = [
    "GridDomain",
    "GridField",
    "parse_h",
    "edge_pairs",
    "edge_costs",
    "dirichlet_energy",
    "energy_density",
    "split_energy_check",
    "regions",
    "collapsed_set_points",
    "hausdorff_distance",
    "diagonal_points",
    "TraceSample",
    "trace_circle",
    "bilinear_sample",
    "field_from_function",
    "linear_field",
    "example1_field",
    "example1_sheets",
    "load_field",
    "save_field",
    "export_csv",
]

EXTERIOR = -2


def parse_h(h) -> float:
    """Parse a grid spacing given as a float or a fraction string like ``"1/64"``."""
    if isinstance(h, str):
        return float(Fraction(h.strip()))
    return float(h)


@dataclass
class GridDomain:
    """Masked uniform lattice.

    Parameters
    ----------
    kind : {"square", "disk"}
    h : float
        Lattice spacing.
    m : int
        Dimension (``m >= 2``; disks require ``m = 2``).
    radius : float
        Disk radius, or half-width ``L`` of the square.
    center : sequence of float, optional
        Center of the disk or square (default the origin).
    """

    kind: str
    h: float
    m: int = 2
    radius: float = 1.0
    center: tuple = None  # type: ignore[assignment]
    axis: np.ndarray = field(init=False, repr=False)
    mask: np.ndarray = field(init=False, repr=False)
    boundary: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.h = parse_h(self.h)
        if self.h <= 0:
            raise ValueError("h must be positive")
        if self.m < 2:
            raise ValueError("m must be at least 2")
        if self.kind not in ("square", "disk"):
            raise ValueError(f"unknown domain kind {self.kind!r}")
        if self.kind == "disk" and self.m != 2:
            raise ValueError("disk domains are two-dimensional")
        if self.center is None:
            self.center = (0.0,) * self.m
        self.center = tuple(float(c) for c in self.center)
        R = float(self.radius)
        n_half = int(round(R / self.h))
        if self.kind == "square" and abs(n_half * self.h - R) > 1e-9 * max(1.0, R):
            raise ValueError("square half-width must be a multiple of h")
        if self.kind == "disk":
            n_half += 1  # one layer of exterior nodes
        self.axis = self.h * np.arange(-n_half, n_half + 1)
        shape = (len(self.axis),) * self.m
        if self.kind == "square":
            self.mask = np.ones(shape, dtype=bool)
        else:
            X, Y = np.meshgrid(self.axis, self.axis, indexing="ij")
            self.mask = X**2 + Y**2 <= R**2 * (1.0 + 1e-12)
        self.boundary = self.mask & ~_all_neighbors_active(self.mask)

    # -- geometry -------------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.mask.shape

    @property
    def interior(self) -> np.ndarray:
        return self.mask & ~self.boundary

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``grid_shape + (m,)``."""
        grids = np.meshgrid(*([self.axis] * self.m), indexing="ij")
        return np.stack(grids, axis=-1) + np.asarray(self.center)

    def index_of(self, x) -> tuple:
        """Lattice index of the node nearest to ``x``."""
        x = np.asarray(x, dtype=float) - np.asarray(self.center)
        return tuple(int(round((xi - self.axis[0]) / self.h)) for xi in x)

    def dist_to_boundary(self, x0) -> float:
        """Distance from ``x0`` to the boundary of the continuous domain."""
        d = np.asarray(x0, dtype=float) - np.asarray(self.center)
        if self.kind == "disk":
            return float(self.radius - np.linalg.norm(d))
        return float(np.min(self.radius - np.abs(d)))

    def spec(self) -> dict:
        return {"kind": self.kind, "radius": float(self.radius), "center": list(self.center), "m": self.m}

    def refine(self, factor: int = 2) -> "GridDomain":
        return GridDomain(self.kind, self.h / factor, self.m, self.radius, self.center)


def _all_neighbors_active(mask: np.ndarray) -> np.ndarray:
    """True where every axis neighbor exists and is active."""
    ok = np.ones_like(mask)
    for k in range(mask.ndim):
        fwd = np.zeros_like(mask)
        bwd = np.zeros_like(mask)
        sl_lo = [slice(None)] * mask.ndim
        sl_hi = [slice(None)] * mask.ndim
        sl_lo[k] = slice(0, -1)
        sl_hi[k] = slice(1, None)
        fwd[tuple(sl_lo)] = mask[tuple(sl_hi)]
        bwd[tuple(sl_hi)] = mask[tuple(sl_lo)]
        ok &= fwd & bwd
    return ok


def edge_pairs(shape: tuple, k: int) -> tuple[tuple, tuple]:
    """Slices selecting the lower and upper endpoints of the axis-``k`` edges."""
    lo = [slice(None)] * len(shape)
    hi = [slice(None)] * len(shape)
    lo[k] = slice(0, -1)
    hi[k] = slice(1, None)
    return tuple(lo), tuple(hi)


def _canonical(atoms: np.ndarray, sign: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    atoms = np.array(atoms, dtype=float)
    sign = np.where(np.asarray(sign) >= 0, 1, -1).astype(np.int8)
    Q, n = atoms.shape[-2:]
    if n == 1:
        atoms = np.sort(atoms, axis=-2)
    else:
        flat = atoms.reshape(-1, Q, n)
        for p in range(flat.shape[0]):
            idx = np.lexsort(flat[p].T[::-1])
            flat[p] = flat[p][idx]
        atoms = flat.reshape(atoms.shape)
    collapsed = np.all(atoms == atoms[..., :1, :], axis=(-2, -1))
    sign = np.where(collapsed, 1, sign).astype(np.int8)
    return atoms, sign


class GridField:
    """Special-Q-point valued map on a :class:`GridDomain`.

    Parameters
    ----------
    domain : GridDomain
    atoms : ndarray, shape ``domain.shape + (Q, n)``
    sign : ndarray of {+1, -1}, shape ``domain.shape``
    fixed : ndarray of bool, optional
        Nodes held fixed by the solvers (default: the domain boundary).
    """

    def __init__(self, domain: GridDomain, atoms, sign, fixed=None) -> None:
        atoms = np.asarray(atoms, dtype=float)
        if atoms.shape[: domain.m] != domain.shape or atoms.ndim != domain.m + 2:
            raise ValueError(f"atoms must have shape {domain.shape} + (Q, n), got {atoms.shape}")
        sign = np.broadcast_to(np.asarray(sign), domain.shape)
        atoms, sign = _canonical(atoms, sign)
        inactive = ~domain.mask
        atoms[inactive] = 0.0
        sign[inactive] = 1
        self.domain = domain
        self.atoms = atoms
        self.sign = sign
        self.fixed = (domain.boundary.copy() if fixed is None else np.asarray(fixed, dtype=bool) & domain.mask)

    @property
    def Q(self) -> int:
        return self.atoms.shape[-2]

    @property
    def n(self) -> int:
        return self.atoms.shape[-1]

    @property
    def m(self) -> int:
        return self.domain.m

    def copy(self) -> "GridField":
        return GridField(self.domain, self.atoms.copy(), self.sign.copy(), self.fixed.copy())

    def value(self, idx) -> SpecPoint:
        idx = tuple(idx)
        return SpecPoint(self.atoms[idx], int(self.sign[idx]))

    def barycenter(self) -> np.ndarray:
        return self.atoms.mean(axis=-2)

    def embedded(self) -> np.ndarray:
        """Flat embedded coordinates, shape ``grid_shape + (2Q + 1,)`` (``n = 1``)."""
        _require_n1(self.n)
        X = zeta_batch(self.atoms, self.sign)
        X[~self.domain.mask] = 0.0
        return X

    @classmethod
    def from_embedded(cls, domain: GridDomain, X: np.ndarray, Q: int, fixed=None) -> "GridField":
        atoms, sign = zeta_inv_batch(X, Q)
        return cls(domain, atoms, sign, fixed)

    def norms2(self) -> np.ndarray:
        """``|u(x)|^2`` per node."""
        return np.sum(self.atoms**2, axis=(-2, -1))

    # -- serialization ------------------------------------------------------
    def to_json(self) -> dict:
        d = self.domain
        idx = np.argwhere(d.mask)
        nodes = []
        for ix in idx:
            t = tuple(ix)
            nodes.append(
                {
                    "index": [int(v) for v in ix],
                    "sign": int(self.sign[t]),
                    "atoms": self.atoms[t].tolist(),
                    "fixed": bool(self.fixed[t]),
                }
            )
        return {
            "format": "specq-field",
            "version": 1,
            "Q": self.Q,
            "n": self.n,
            "m": self.m,
            "shape": d.spec(),
            "h": d.h,
            "nodes": nodes,
        }

    @classmethod
    def from_json(cls, data: dict) -> "GridField":
        try:
            if data.get("format") != "specq-field":
                raise ValueError("not a specq field file")
            Q, n, m = int(data["Q"]), int(data["n"]), int(data["m"])
            sh = data["shape"]
            dom = GridDomain(sh["kind"], float(data["h"]), m, float(sh["radius"]), tuple(sh["center"]))
            atoms = np.zeros(dom.shape + (Q, n))
            sign = np.ones(dom.shape, dtype=np.int8)
            fixed = np.zeros(dom.shape, dtype=bool)
            for k, node in enumerate(data["nodes"]):
                t = tuple(node["index"])
                if not dom.mask[t]:
                    raise ValueError(f"node {k} at {t} lies outside the domain")
                atoms[t] = np.asarray(node["atoms"], dtype=float).reshape(Q, n)
                sign[t] = int(node.get("sign", 1))
                fixed[t] = bool(node.get("fixed", False))
        except (KeyError, TypeError, IndexError) as exc:
            raise ValueError(f"malformed field file: {exc!r}") from exc
        return cls(dom, atoms, sign, fixed)


def save_field(u: GridField, path) -> None:
    with open(path, "w") as fh:
        json.dump(u.to_json(), fh)


def load_field(path) -> GridField:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return GridField.from_json(data)


# ---------------------------------------------------------------------------
# energies


def _pair_Gs2(A: np.ndarray, sA: np.ndarray, B: np.ndarray, sB: np.ndarray) -> np.ndarray:
    """Squared special distance between stacked values."""
    Q = A.shape[-2]
    same = sA == sB
    out = np.empty(A.shape[:-2])
    if np.any(same):
        out[same] = batch_metric_G2(A[same], B[same])
    opp = ~same
    if np.any(opp):
        a, b = A[opp], B[opp]
        ea, eb = a.mean(axis=-2, keepdims=True), b.mean(axis=-2, keepdims=True)
        out[opp] = (
            np.sum((a - ea) ** 2, axis=(-2, -1))
            + np.sum((b - eb) ** 2, axis=(-2, -1))
            + Q * np.sum((ea - eb) ** 2, axis=(-2, -1))
        )
    return out


def edge_costs(u: GridField) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per-axis arrays of squared edge distances and edge activity masks.

    Returns a list over axes ``k`` of ``(cost, active)`` with shapes equal
    to the grid shape shortened by one along axis ``k``.
    """
    out = []
    mask = u.domain.mask
    for k in range(u.m):
        lo, hi = edge_pairs(mask.shape, k)
        active = mask[lo] & mask[hi]
        cost = np.zeros(active.shape)
        cost[active] = _pair_Gs2(u.atoms[lo][active], u.sign[lo][active], u.atoms[hi][active], u.sign[hi][active])
        out.append((cost, active))
    return out


def dirichlet_energy(u: GridField) -> float:
    """Discrete Dirichlet energy ``E_h(u)``."""
    h = u.domain.h
    total = sum(float(c.sum()) for c, _ in edge_costs(u))
    return h ** (u.m - 2) * total


def energy_density(u: GridField) -> np.ndarray:
    """Per-node energy density; ``sum(density) * h^m`` equals ``E_h``."""
    h, m = u.domain.h, u.m
    dens = np.zeros(u.domain.shape)
    for k, (c, _) in enumerate(edge_costs(u)):
        lo, hi = edge_pairs(dens.shape, k)
        dens[lo] += 0.5 * c
        dens[hi] += 0.5 * c
    return dens * h ** (m - 2) / h**m


def split_energy_check(u: GridField) -> tuple[float, float, float]:
    """Return ``(total, centered, barycenter)`` discrete energies.

    ``centered`` is the energy of ``u`` recentred nodewise (signs kept) and
    ``barycenter`` is the scalar energy of the barycenter map; the identity
    ``total = centered + Q * barycenter`` holds edge by edge.
    """
    eta = u.barycenter()
    centered = GridField(u.domain, u.atoms - eta[..., None, :], u.sign, u.fixed)
    mask = u.domain.mask
    h, m = u.domain.h, u.m
    bary = 0.0
    for k in range(m):
        lo, hi = edge_pairs(mask.shape, k)
        active = mask[lo] & mask[hi]
        d = eta[hi] - eta[lo]
        bary += float(np.sum(np.sum(d * d, axis=-1)[active]))
    return dirichlet_energy(u), dirichlet_energy(centered), h ** (m - 2) * bary


# ---------------------------------------------------------------------------
# regions


def regions(u: GridField) -> tuple[np.ndarray, np.ndarray]:
    """Region labels per node and the interface node set.

    Returns
    -------
    labels : ndarray of int8
        ``RegionLabel`` values on active nodes, ``-2`` outside the mask.
    interface : ndarray of bool
        Collapsed nodes with at least one non-collapsed active neighbor.
    """
    collapsed = np.all(u.atoms == u.atoms[..., :1, :], axis=(-2, -1))
    labels = np.where(collapsed, int(RegionLabel.Collapsed), u.sign).astype(np.int8)
    mask = u.domain.mask
    labels[~mask] = EXTERIOR
    noncol = mask & ~collapsed
    near = np.zeros_like(mask)
    for k in range(u.m):
        lo, hi = edge_pairs(mask.shape, k)
        near[lo] |= noncol[hi]
        near[hi] |= noncol[lo]
    interface = mask & collapsed & near
    return labels, interface


def collapsed_set_points(u: GridField) -> np.ndarray:
    """Sample points of the collapsed set of the interpolated field.

    Collapsed nodes, plus the point on every edge joining a Positive and a
    Negative node where the embedded segment retracts to a collapsed value
    (at fraction ``|v_a| / (|v_a| + |w_b|)`` from the Positive end).
    """
    labels, _ = regions(u)
    X = u.domain.coords()
    pts = [X[labels == RegionLabel.Collapsed]]
    eta = u.barycenter()
    cnorm = np.sqrt(np.sum((u.atoms - eta[..., None, :]) ** 2, axis=(-2, -1)))
    for k in range(u.m):
        lo, hi = edge_pairs(labels.shape, k)
        la, lb = labels[lo], labels[hi]
        flip = ((la == 1) & (lb == -1)) | ((la == -1) & (lb == 1))
        if not np.any(flip):
            continue
        na, nb = cnorm[lo][flip], cnorm[hi][flip]
        t = na / (na + nb)
        xa, xb = X[lo][flip], X[hi][flip]
        pts.append(xa + t[:, None] * (xb - xa))
    return np.concatenate(pts, axis=0) if pts else np.zeros((0, u.m))


def hausdorff_distance(A: np.ndarray, B: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two finite point sets."""
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    if len(A) == 0 or len(B) == 0:
        return math.inf if len(A) + len(B) else 0.0
    dA, _ = cKDTree(B).query(A)
    dB, _ = cKDTree(A).query(B)
    return float(max(dA.max(), dB.max()))


def diagonal_points(radius: float = 1.0, spacing: float = 1e-3) -> np.ndarray:
    """Sample points of ``{x = y} cup {x = -y}`` inside the closed disk."""
    k = int(math.ceil(radius / spacing))
    t = np.linspace(-radius, radius, 2 * k + 1) / math.sqrt(2.0)
    return np.concatenate([np.stack([t, t], -1), np.stack([t, -t], -1)])


# ---------------------------------------------------------------------------
# traces


def bilinear_sample(u: GridField, pts: np.ndarray, X: np.ndarray | None = None, grad: bool = False):
    """Bilinear interpolation of embedded coordinates at points (``m = 2``).

    Parameters
    ----------
    pts : ndarray, shape (p, 2)
    X : ndarray, optional
        Precomputed embedded coordinates of ``u``.
    grad : bool
        Also return the gradient of the interpolant, shape (p, 2Q+1, 2).

    Returns
    -------
    vals : ndarray, shape (p, 2Q + 1)
    """
    if u.m != 2:
        raise ValueError("bilinear sampling requires m = 2")
    d = u.domain
    X = u.embedded() if X is None else X
    pts = np.atleast_2d(pts) - np.asarray(d.center)
    s = (pts - d.axis[0]) / d.h
    i0 = np.floor(s).astype(int)
    i0 = np.clip(i0, 0, len(d.axis) - 2)
    f = s - i0
    i, j = i0[:, 0], i0[:, 1]
    ok = d.mask[i, j] & d.mask[i + 1, j] & d.mask[i, j + 1] & d.mask[i + 1, j + 1]
    if not np.all(ok):
        raise ValueError("sample point lies in a cell with inactive corners")
    fx, fy = f[:, :1], f[:, 1:]
    v00, v10, v01, v11 = X[i, j], X[i + 1, j], X[i, j + 1], X[i + 1, j + 1]
    vals = (1 - fx) * (1 - fy) * v00 + fx * (1 - fy) * v10 + (1 - fx) * fy * v01 + fx * fy * v11
    if not grad:
        return vals
    gx = ((1 - fy) * (v10 - v00) + fy * (v11 - v01)) / d.h
    gy = ((1 - fx) * (v01 - v00) + fx * (v11 - v10)) / d.h
    return vals, np.stack([gx, gy], axis=-1)


@dataclass
class TraceSample:
    """Samples of a field on a circle ``x0 + r (cos t, sin t)``."""

    center: np.ndarray
    r: float
    angles: np.ndarray
    X: np.ndarray  # flat embedded coordinates, shape (K, 2Q + 1)
    Q: int

    def values(self) -> tuple[np.ndarray, np.ndarray]:
        return zeta_inv_batch(self.X, self.Q)

    def points(self) -> list[SpecPoint]:
        atoms, sign = self.values()
        return [SpecPoint(a, int(s)) for a, s in zip(atoms, sign)]

    def norms2(self) -> np.ndarray:
        return np.sum(self.X**2, axis=-1)


def trace_circle(u: GridField, r: float, K: int | None = None, center=None) -> TraceSample:
    """Sample ``u`` on a circle by bilinear interpolation in embedded coordinates.

    The interpolated coordinates are retracted back with ``varrho``.
    ``K`` defaults to ``ceil(2 pi r / h)``.
    """
    d = u.domain
    if d.m != 2:
        raise ValueError("trace_circle requires m = 2")
    c = np.asarray(d.center if center is None else center, dtype=float)
    if not 0.0 < r < d.dist_to_boundary(c):
        raise ValueError(f"radius {r} outside (0, {d.dist_to_boundary(c)})")
    if K is None:
        K = int(math.ceil(2.0 * math.pi * r / d.h))
    th = 2.0 * np.pi * np.arange(K) / K
    pts = c + r * np.stack([np.cos(th), np.sin(th)], axis=-1)
    vals = bilinear_sample(u, pts)
    return TraceSample(c, float(r), th, varrho_vec(vals, u.Q), u.Q)


# ---------------------------------------------------------------------------
# constructors


def field_from_function(domain: GridDomain, fn: Callable, fixed=None) -> GridField:
    """Sample ``fn(coords) -> (atoms, sign)`` at every node of ``domain``."""
    atoms, sign = fn(domain.coords())
    return GridField(domain, atoms, sign, fixed)


def linear_field(domain: GridDomain, a, Q: int = 2, b: float | np.ndarray = 0.0) -> GridField:
    """Single-valued field ``Q[[a . x + b]]`` (``n = 1``)."""
    a = np.asarray(a, dtype=float)
    X = domain.coords()
    v = X @ a + b
    atoms = np.repeat(v[..., None, None], Q, axis=-2)
    return GridField(domain, atoms, 1)


def example1_sheets(x, y):
    """The two sheets ``0`` and ``3(x^2 - y^2)``."""
    g = 3.0 * (x * x - y * y)
    return np.zeros_like(g), g


def example1_field(domain: GridDomain, sign_rule: str = "diagonal") -> GridField:
    """Two-valued field with sheets ``{0, 3(x^2 - y^2)}``.

    Parameters
    ----------
    sign_rule : {"diagonal", "quadrant"}
        ``"diagonal"``: Positive on ``{x > y}``, Negative on ``{x < y}``.
        ``"quadrant"``: Positive on ``{|x| > |y|}``, Negative on ``{|x| < |y|}``.
        In both cases the value is collapsed where the sheets meet.
    """
    C = domain.coords()
    x, y = C[..., 0], C[..., 1]
    f0, g0 = example1_sheets(x, y)
    atoms = np.stack([f0, g0], axis=-1)[..., None]
    if sign_rule == "diagonal":
        sign = np.where(x - y >= 0, 1, -1)
    elif sign_rule == "quadrant":
        sign = np.where(np.abs(x) >= np.abs(y), 1, -1)
    else:
        raise ValueError(f"unknown sign rule {sign_rule!r}")
    return GridField(domain, atoms, sign)


def export_csv(u: GridField, path) -> None:
    """Write node coordinates, region label and energy density as CSV."""
    labels, _ = regions(u)
    dens = energy_density(u)
    C = u.domain.coords()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{k + 1}" for k in range(u.m)] + ["label", "energy_density"])
        for idx in np.argwhere(u.domain.mask):
            t = tuple(idx)
            w.writerow([f"{v:.12g}" for v in C[t]] + [int(labels[t]), f"{dens[t]:.12g}"])
