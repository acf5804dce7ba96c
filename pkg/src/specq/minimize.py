"""Discrete Dirichlet minimization with fixed boundary values.

Two solvers are provided for ``n = 1``:

* :func:`solve_dirichlet` (strategy "embedded") works in flat embedded
  coordinates ``X = [a, b, sqrt(Q) z]``.  Each sweep updates the two
  checkerboard colors in turn: a damped nodewise gradient step on the
  quadratic edge energy followed by the nearest-point projection onto the
  embedded image.  Every nodewise update lowers the energy, so the energy
  trace is nonincreasing and this is asserted per sweep.
* :func:`solve_two_sheet` (``Q = 2``) alternates between exact linear
  solves for fixed region labels and nodewise label updates.

:func:`variation_residuals` evaluates the inner and outer first-variation
integrals of a grid field against smooth test fields.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .embedret import _require_n1, project_nearest, varrho_vec
from .fields import GridDomain, GridField, edge_pairs

__all__ = [
    "SolveReport",
    "solve_dirichlet",
    "solve_two_sheet",
    "harmonic_extension",
    "embedded_energy",
    "factorized_solve",
    "BumpVectorField",
    "BumpScalarField",
    "variation_residuals",
    "inner_variation_by_differencing",
]


@dataclass
class SolveReport:
    """Diagnostics returned by the solvers."""

    strategy: str
    energy: float
    initial_energy: float
    sweeps: int
    converged: bool
    energy_trace: list = field(default_factory=list)
    label_changes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "strategy": self.strategy,
            "energy": self.energy,
            "initial_energy": self.initial_energy,
            "sweeps": self.sweeps,
            "converged": self.converged,
            "energy_trace": self.energy_trace,
            "label_changes": self.label_changes,
        }


# ---------------------------------------------------------------------------
# grid helpers


class _Stencil:
    """Index tables of the free nodes and their axis neighbors."""

    def __init__(self, domain: GridDomain, fixed: np.ndarray) -> None:
        mask = domain.mask
        self.shape = mask.shape
        free = mask & ~fixed
        if not np.any(free):
            raise ValueError("field has no free nodes")
        # Free nodes must not sit on the lattice edge (all neighbors exist).
        border = np.zeros_like(mask)
        for k in range(domain.m):
            sl = [slice(None)] * domain.m
            sl[k] = 0
            border[tuple(sl)] = True
            sl[k] = -1
            border[tuple(sl)] = True
        if np.any(free & border):
            raise ValueError("free nodes on the lattice edge")
        self.free = free
        self.flat_free = np.flatnonzero(free)
        strides = np.array([int(np.prod(mask.shape[k + 1 :])) for k in range(domain.m)])
        nb = []
        for k in range(domain.m):
            nb.append(self.flat_free + strides[k])
            nb.append(self.flat_free - strides[k])
        nb = np.stack(nb, axis=1)  # (F, 2m)
        self.nb_active = mask.ravel()[nb]
        self.nb = nb
        self.deg = self.nb_active.sum(axis=1)
        # Inactive neighbors point at an extra all-zero row.
        self.nb_padded = np.where(self.nb_active, nb, mask.size)
        idx = np.argwhere(free)
        parity = idx.sum(axis=1) % 2
        self.colors = [np.flatnonzero(parity == c) for c in (0, 1)]


def embedded_energy(X: np.ndarray, domain: GridDomain) -> float:
    """Edge-sum energy of flat embedded coordinates."""
    mask = domain.mask
    total = 0.0
    for k in range(domain.m):
        lo, hi = edge_pairs(mask.shape, k)
        act = mask[lo] & mask[hi]
        d = X[hi] - X[lo]
        total += float(np.sum(np.sum(d * d, axis=-1)[act]))
    return domain.h ** (domain.m - 2) * total


def _laplacian_system(domain: GridDomain, fixed: np.ndarray):
    """Graph Laplacian on the free nodes and its coupling to fixed nodes.

    Returns ``(A, B, free)`` such that the discrete harmonic extension
    solves ``A x_free = B x_all``.
    """
    st = _Stencil(domain, fixed)
    nfree = len(st.flat_free)
    pos = -np.ones(domain.mask.size, dtype=np.int64)
    pos[st.flat_free] = np.arange(nfree)
    rows = np.repeat(np.arange(nfree), st.nb.shape[1]).reshape(st.nb.shape)
    nbpos = pos[st.nb]
    inner = st.nb_active & (nbpos >= 0)
    outer = st.nb_active & (nbpos < 0)
    A = sp.csr_matrix((-np.ones(inner.sum()), (rows[inner], nbpos[inner])), shape=(nfree, nfree))
    A = A + sp.diags(st.deg.astype(float))
    B = sp.csr_matrix((np.ones(outer.sum()), (rows[outer], st.nb[outer])), shape=(nfree, domain.mask.size))
    return A.tocsc(), B, st.free


def harmonic_extension(values: np.ndarray, domain: GridDomain, fixed: np.ndarray) -> np.ndarray:
    """Discrete harmonic extension of fixed-node values, coordinatewise.

    Parameters
    ----------
    values : ndarray, shape ``grid_shape + (c,)``
        Only entries at fixed nodes are used.

    Returns
    -------
    ndarray
        Copy of ``values`` with free nodes replaced by the solution of the
        graph Laplace equation (5-point stencil in the interior).
    """
    A, B, free = _laplacian_system(domain, fixed)
    flat = values.reshape(domain.mask.size, -1)
    rhs = B @ flat
    lu = spla.splu(A)
    sol = lu.solve(np.asarray(rhs))
    out = values.copy().reshape(domain.mask.size, -1)
    out[np.flatnonzero(free.ravel())] = sol
    return out.reshape(values.shape)


# ---------------------------------------------------------------------------
# strategy A


def solve_dirichlet(
    u0: GridField,
    tol: float = 1e-10,
    max_iters: int = 100_000,
    step: float = 0.9,
    init: str = "harmonic",
    seed: int = 0,
    trace_every: int = 1,
    callback: Callable | None = None,
) -> tuple[GridField, SolveReport]:
    """Minimize the discrete energy with the fixed nodes of ``u0`` held.

    Parameters
    ----------
    u0 : GridField
        Initial field; ``u0.fixed`` marks the boundary condition.
    tol : float
        Stop when a full sweep lowers the energy by less than ``tol``
        times the current energy.
    max_iters : int
        Maximum number of sweeps.
    step : float
        Gradient step as a fraction of the stability bound ``1/(4m)``
        (in units where the edge energy is ``h^(m-2) sum |dX|^2``).
        Must lie in ``(0, 1]``.
    init : {"harmonic", "given"}
        ``"harmonic"`` replaces the free nodes by the retracted harmonic
        extension of the embedded boundary values; the result is kept only
        if its energy does not exceed that of ``u0``.
    seed : int
        Recorded for reproducibility; the sweep order is deterministic.

    Returns
    -------
    (GridField, SolveReport)
    """
    _require_n1(u0.n)
    if not 0.0 < step <= 1.0:
        raise ValueError("step must lie in (0, 1]")
    dom = u0.domain
    Q = u0.Q
    st = _Stencil(dom, u0.fixed)
    X = u0.embedded()
    E0 = embedded_energy(X, dom)
    if init == "harmonic":
        H = harmonic_extension(X, dom, u0.fixed)
        Xh = X.copy()
        Xh[st.free] = varrho_vec(H[st.free], Q)
        Eh = embedded_energy(Xh, dom)
        if Eh <= E0:
            X = Xh
    elif init != "given":
        raise ValueError(f"unknown init {init!r}")
    # Project free nodes once so that the iteration starts on the image.
    X[st.free] = project_nearest(X[st.free], Q)
    E = embedded_energy(X, dom)
    if E > E0 * (1 + 1e-12) + 1e-300:
        # Projection of a given field can raise the energy; fall back.
        X = u0.embedded()
        E = E0
    dim = X.shape[-1]
    padded = np.zeros((X[..., 0].size + 1, dim))
    padded[:-1] = X.reshape(-1, dim)
    flat = padded[:-1]
    X = flat.reshape(X.shape)
    trace = [E]
    hfac = dom.h ** (dom.m - 2)
    converged = False
    sweeps = 0
    ff = st.flat_free
    sweep_tables = [(ff[col], st.nb_padded[col], st.deg[col].astype(float)) for col in st.colors]
    for sweeps in range(1, max_iters + 1):
        E_prev = E
        for c in range(len(st.colors)):
            nodes, nbrs, deg = sweep_tables[c]
            S = padded[nbrs[:, 0]]
            for j in range(1, nbrs.shape[1]):
                S += padded[nbrs[:, j]]
            target = S / deg[:, None]
            old = flat[nodes]
            new = project_nearest(old + step * (target - old), Q)
            # Exact local energy change: deg * (|new - t|^2 - |old - t|^2).
            dn, do = new - target, old - target
            dE = hfac * float(deg @ (np.einsum("ij,ij->i", dn, dn) - np.einsum("ij,ij->i", do, do)))
            flat[nodes] = new
            E += dE
        if sweeps % 200 == 0:
            E = embedded_energy(X, dom)
        if E > E_prev * (1 + 1e-12) + 1e-14:
            raise RuntimeError(f"energy increased in sweep {sweeps}: {E_prev!r} -> {E!r}")
        if sweeps % trace_every == 0:
            trace.append(E)
        if callback is not None:
            callback(sweeps, E)
        if E_prev - E <= tol * E_prev or E == 0.0:
            converged = True
            break
    E = embedded_energy(X, dom)
    out = GridField.from_embedded(dom, X, Q, u0.fixed)
    # Fixed nodes are copied bit-exactly from the input.
    out.atoms[u0.fixed] = u0.atoms[u0.fixed]
    out.sign[u0.fixed] = u0.sign[u0.fixed]
    rep = SolveReport("embedded", E, E0, sweeps, converged, trace)
    return out, rep


# ---------------------------------------------------------------------------
# strategy B (Q = 2, n = 1)

_E_POS = np.array([-1.0, 1.0]) / math.sqrt(2.0)


def _sigma_z(u: GridField) -> tuple[np.ndarray, np.ndarray]:
    """Signed half-gap ``sigma`` and barycenter ``z`` of a two-valued field."""
    vals = u.atoms[..., 0]
    z = vals.mean(axis=-1)
    gap = (vals[..., 1] - vals[..., 0]) / math.sqrt(2.0)
    return np.where(u.sign >= 0, gap, -gap), z


def _from_sigma_z(domain, sigma, z, fixed) -> GridField:
    half = np.abs(sigma) / math.sqrt(2.0)
    atoms = np.stack([z - half, z + half], axis=-1)[..., None]
    sign = np.where(sigma < 0, -1, 1)
    return GridField(domain, atoms, sign, fixed)


def _two_sheet_energy(domain, sigma, z) -> float:
    mask = domain.mask
    total = 0.0
    for k in range(domain.m):
        lo, hi = edge_pairs(mask.shape, k)
        act = mask[lo] & mask[hi]
        sa, sb = sigma[lo], sigma[hi]
        opp = sa * sb < 0
        c = np.where(opp, sa * sa + sb * sb, (sa - sb) ** 2) + 2.0 * (z[hi] - z[lo]) ** 2
        total += float(c[act].sum())
    return domain.h ** (domain.m - 2) * total


def solve_two_sheet(
    u0: GridField,
    tol: float = 1e-12,
    max_outer: int = 200,
    seed: int = 0,
    init: str = "harmonic",
) -> tuple[GridField, SolveReport]:
    """Alternating label/linear-solve minimizer for ``Q = 2``, ``n = 1``.

    The value at a node is encoded by the barycenter ``z`` and a signed
    half-gap ``sigma`` (positive on Positive nodes, negative on Negative
    nodes, zero on Collapsed ones).  The barycenter decouples and solves the
    graph Laplace equation.  For fixed labels the energy is quadratic in
    ``sigma``: same-label edges cost ``(sigma_a - sigma_b)^2``, edges between
    opposite labels cost ``sigma_a^2 + sigma_b^2`` and Collapsed nodes are
    pinned to zero.  Each outer iteration solves that system exactly, then
    sweeps the two checkerboard colors updating every free node to its best
    local labeling (Positive, Negative or Collapsed; exact ties go to
    Collapsed).  The loop stops at a label fixed point.

    ``init="harmonic"`` starts from the harmonic extension of the boundary
    values of ``sigma``; ``init="given"`` starts from the values of ``u0``.
    """
    if init not in ("harmonic", "given"):
        raise ValueError(f"unknown init {init!r}")
    if u0.Q != 2 or u0.n != 1:
        raise ValueError("the two-sheet solver requires Q = 2 and n = 1")
    dom = u0.domain
    st = _Stencil(dom, u0.fixed)
    sigma, z = _sigma_z(u0)
    E0 = _two_sheet_energy(dom, sigma, z)
    zz = harmonic_extension(z[..., None], dom, u0.fixed)[..., 0]
    if init == "harmonic":
        sig = harmonic_extension(sigma[..., None], dom, u0.fixed)[..., 0]
        sigma = np.where(st.free, sig, sigma)
    z = np.where(st.free, zz, z)
    labels = np.sign(sigma).astype(np.int8)
    sflat = sigma.ravel()
    lflat = labels.ravel()
    ff = st.flat_free
    nfree = len(ff)
    pos_in_free = -np.ones(dom.mask.size, dtype=np.int64)
    pos_in_free[ff] = np.arange(nfree)
    trace = [_two_sheet_energy(dom, sigma, z)]
    changes = []
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        _solve_sigma(st, sflat, lflat, pos_in_free)
        changed = 0
        for col in st.colors:
            changed += _relabel(st, col, sflat, lflat)
        changes.append(int(changed))
        E = _two_sheet_energy(dom, sigma, z)
        trace.append(E)
        if changed == 0:
            _solve_sigma(st, sflat, lflat, pos_in_free)
            if np.all(sflat[ff] * lflat[ff] >= 0):
                converged = True
                break
        if len(trace) > 2 and abs(trace[-2] - trace[-1]) <= tol * max(trace[-1], 1e-300) and changed == 0:
            converged = True
            break
    E = _two_sheet_energy(dom, sigma, z)
    out = _from_sigma_z(dom, sigma, z, u0.fixed)
    out.atoms[u0.fixed] = u0.atoms[u0.fixed]
    out.sign[u0.fixed] = u0.sign[u0.fixed]
    return out, SolveReport("two-sheet", E, E0, outer, converged, trace, changes)


def _solve_sigma(st: _Stencil, sflat, lflat, pos_in_free) -> None:
    """Exact minimizer of the sigma energy for the current labels."""
    ff = st.flat_free
    lab = lflat[ff]
    act = lab != 0
    idx = np.flatnonzero(act)
    if len(idx) == 0:
        sflat[ff] = 0.0
        return
    renum = -np.ones(len(ff), dtype=np.int64)
    renum[idx] = np.arange(len(idx))
    nb = st.nb[idx]
    nb_act = st.nb_active[idx]
    nb_lab = lflat[nb]
    same = nb_act & (nb_lab == lab[idx][:, None])
    nb_free = pos_in_free[nb]
    nb_free_act = np.where(nb_free >= 0, renum[np.maximum(nb_free, 0)], -1)
    coupled = same & (nb_free >= 0) & (nb_free_act >= 0)
    rhs = np.sum(np.where(same & (nb_free < 0), sflat[nb], 0.0), axis=1)
    r = np.repeat(np.arange(len(idx)), nb.shape[1]).reshape(nb.shape)[coupled]
    c = nb_free_act[coupled]
    A = sp.csr_matrix((-np.ones(len(r)), (r, c)), shape=(len(idx), len(idx))) + sp.diags(st.deg[idx].astype(float))
    sol = spla.spsolve(A.tocsc(), rhs)
    vals = np.zeros(len(ff))
    vals[idx] = sol
    sflat[ff] = vals


def _relabel(st: _Stencil, col: np.ndarray, sflat, lflat) -> int:
    """Best local labeling for the nodes of one color; returns #changes."""
    nodes = st.flat_free[col]
    nb = st.nb[col]
    act = st.nb_active[col]
    s = np.where(act, sflat[nb], 0.0)
    deg = st.deg[col].astype(float)
    sp_ = np.where(s > 0, s, 0.0)
    sn_ = np.where(s < 0, -s, 0.0)
    sum_sq = np.sum(s * s, axis=1)
    P = np.sum(sp_, axis=1)
    N = np.sum(sn_, axis=1)
    # Local energy with value t >= 0 on the positive side:
    # deg t^2 - 2 t P + sum_sq, minimized at t = P / deg.
    tp = P / deg
    tn = N / deg
    e_pos = sum_sq - P * P / deg
    e_neg = sum_sq - N * N / deg
    e_col = sum_sq
    old = lflat[nodes].copy()
    keep = np.where(old == 0, 1, old)
    new = np.where(e_pos < e_neg, 1, np.where(e_neg < e_pos, -1, keep))
    best = np.minimum(e_pos, e_neg)
    new = np.where(best < e_col, new, 0).astype(np.int8)
    val = np.where(new == 1, tp, np.where(new == -1, -tn, 0.0))
    lflat[nodes] = new
    sflat[nodes] = val
    return int(np.sum(new != old))


# ---------------------------------------------------------------------------
# factorization


def factorized_solve(u0: GridField, **opts) -> tuple[GridField, float, float]:
    """Solve the centered and barycentric problems separately and recombine.

    Returns ``(u, E_recombined, E_barycenter_part)`` where the barycenter
    part is the discrete harmonic extension of ``eta o u0``.
    """
    eta = u0.barycenter()
    centered = GridField(u0.domain, u0.atoms - eta[..., None, :], u0.sign, u0.fixed)
    uc, _ = solve_dirichlet(centered, **opts)
    zb = harmonic_extension(eta, u0.domain, u0.fixed)
    atoms = uc.atoms - uc.barycenter()[..., None, :] + zb[..., None, :]
    out = GridField(u0.domain, atoms, uc.sign, u0.fixed)
    from .fields import dirichlet_energy

    return out, dirichlet_energy(out), embedded_energy(zb, u0.domain)


# ---------------------------------------------------------------------------
# first variations


def _bump(s: np.ndarray, rho: float):
    """``b(s) = (1 - s^2/rho^2)^4`` on ``s < rho`` and its derivative ``b'(s)/s``."""
    t = np.clip(1.0 - (s / rho) ** 2, 0.0, None)
    b = t**4
    db_over_s = -8.0 * t**3 / rho**2  # b'(s) = -8 s t^3 / rho^2
    return b, db_over_s


@dataclass
class BumpVectorField:
    """Compactly supported vector field ``phi(x) = b(|x - c|) V(x)``.

    ``V`` is either the radial field ``x - c`` (``kind="radial"``) or a
    constant vector (``kind="constant"``).
    """

    center: tuple = (0.0, 0.0)
    radius: float = 0.5
    kind: str = "radial"
    direction: tuple = (1.0, 0.0)

    def __call__(self, x: np.ndarray):
        """Return ``(phi, Dphi)`` with ``Dphi[..., j, k] = d phi_j / d x_k``."""
        c = np.asarray(self.center, dtype=float)
        d = x - c
        s = np.linalg.norm(d, axis=-1)
        b, dbs = _bump(s, self.radius)
        grad_b = dbs[..., None] * d
        if self.kind == "radial":
            V = d
            DV = np.broadcast_to(np.eye(x.shape[-1]), x.shape + (x.shape[-1],))
        elif self.kind == "constant":
            V = np.broadcast_to(np.asarray(self.direction, dtype=float), x.shape)
            DV = np.zeros(x.shape + (x.shape[-1],))
        else:
            raise ValueError(f"unknown kind {self.kind!r}")
        phi = b[..., None] * V
        Dphi = b[..., None, None] * DV + V[..., :, None] * grad_b[..., None, :]
        return phi, Dphi


@dataclass
class BumpScalarField:
    """Compactly supported scalar ``b(|x - c|)`` with its gradient."""

    center: tuple = (0.0, 0.0)
    radius: float = 0.5

    def __call__(self, x: np.ndarray):
        c = np.asarray(self.center, dtype=float)
        d = x - c
        s = np.linalg.norm(d, axis=-1)
        b, dbs = _bump(s, self.radius)
        return b, dbs[..., None] * d


def _check_support(u: GridField, center, radius) -> None:
    d = u.domain
    C = d.coords()
    near_fixed = u.fixed
    dist = np.linalg.norm(C[near_fixed] - np.asarray(center), axis=-1)
    if np.any(dist < radius + d.h):
        raise ValueError("test field support reaches fixed nodes")


def _cell_sheet_gradients(u: GridField):
    """Midpoints, sheet values and sheet gradients on fully active cells (m = 2).

    Returns ``(xc, vals, grads, weight)`` where ``vals`` has shape
    ``(cells, Q)`` and ``grads`` shape ``(cells, Q, 2)``.
    """
    if u.m != 2:
        raise ValueError("variation residuals are implemented for m = 2")
    _require_n1(u.n)
    d = u.domain
    Q = u.Q
    X = u.embedded()
    mask = d.mask
    ok = mask[:-1, :-1] & mask[1:, :-1] & mask[:-1, 1:] & mask[1:, 1:]
    h = d.h
    C = d.coords()
    xc = 0.25 * (C[:-1, :-1][ok] + C[1:, :-1][ok] + C[:-1, 1:][ok] + C[1:, 1:][ok])
    if Q == 2:
        return (xc, *_two_sheet_cell_values(u, ok), h * h)
    v00, v10, v01, v11 = X[:-1, :-1][ok], X[1:, :-1][ok], X[:-1, 1:][ok], X[1:, 1:][ok]
    gx = 0.5 * ((v10 - v00) + (v11 - v01)) / h
    gy = 0.5 * ((v01 - v00) + (v11 - v10)) / h
    mid = 0.25 * (v00 + v10 + v01 + v11)
    # Region of each cell from its retracted midpoint value.
    P = varrho_vec(mid, Q)
    na = np.sum(P[:, :Q] ** 2, axis=1)
    nb = np.sum(P[:, Q : 2 * Q] ** 2, axis=1)
    sq = math.sqrt(Q)
    z = mid[:, 2 * Q] / sq
    Dz = np.stack([gx[:, 2 * Q], gy[:, 2 * Q]], axis=-1) / sq
    Da = np.stack([gx[:, :Q], gy[:, :Q]], axis=-1)
    Db = np.stack([gx[:, Q : 2 * Q], gy[:, Q : 2 * Q]], axis=-1)
    pos = (na >= nb) & (na > 0)
    neg = (nb > na)
    cen = np.where(pos[:, None], mid[:, :Q], np.where(neg[:, None], mid[:, Q : 2 * Q], 0.0))
    Dc = np.where(pos[:, None, None], Da, np.where(neg[:, None, None], Db, 0.0))
    vals = cen + z[:, None]
    grads = Dc + Dz[:, None, :]
    return xc, vals, grads, h * h


def _two_sheet_cell_values(u: GridField, ok: np.ndarray):
    # With the signed half-gap s (positive on Positive nodes, negative on
    # Negative ones) the sheets z + s and z - s stay smooth across interfaces,
    # so cells cut by an interface need no region choice.
    vals = u.atoms[..., 0]
    z = vals.mean(axis=-1)
    s = np.where(u.sign >= 0, 0.5, -0.5) * (vals[..., 1] - vals[..., 0])
    h = u.domain.h
    out_v, out_g = [], []
    for f in (z, s):
        f00, f10, f01, f11 = f[:-1, :-1][ok], f[1:, :-1][ok], f[:-1, 1:][ok], f[1:, 1:][ok]
        out_v.append(0.25 * (f00 + f10 + f01 + f11))
        out_g.append(np.stack([0.5 * ((f10 - f00) + (f11 - f01)), 0.5 * ((f01 - f00) + (f11 - f10))], axis=-1) / h)
    (zm, sm), (gz, gs) = out_v, out_g
    vals = np.stack([zm + sm, zm - sm], axis=-1)
    grads = np.stack([gz + gs, gz - gs], axis=1)
    return vals, grads


def variation_residuals(
    u: GridField,
    phi: BumpVectorField | None = None,
    psi: BumpScalarField | None = None,
) -> tuple[float, float]:
    """Inner and outer first-variation integrals of ``u`` (``m = 2``, ``n = 1``).

    inner = int 2 sum_i <Du_i : Du_i Dphi> - |Du|^2 div phi
    outer = int sum_i <Du_i : u_i (x) grad psi> + psi |Du_i|^2

    (the outer one for the target deformation ``u -> (1 + t psi(x)) u``).
    Both are evaluated by midpoint quadrature on grid cells with sheet
    gradients taken in the region of each cell.
    """
    phi = phi if phi is not None else BumpVectorField()
    psi = psi if psi is not None else BumpScalarField(phi.center, phi.radius)
    _check_support(u, phi.center, phi.radius)
    _check_support(u, psi.center, psi.radius)
    xc, vals, grads, w = _cell_sheet_gradients(u)
    ph, Dph = phi(xc)
    div = np.trace(Dph, axis1=-2, axis2=-1)
    # <Du_i : Du_i Dphi> = sum_{j,k} d_j u_i d_k u_i d_k phi_j
    quad = np.einsum("cij,cjk,cik->c", grads, Dph, grads)
    dens = np.sum(grads**2, axis=(1, 2))
    inner = float(np.sum(2.0 * quad - dens * div) * w)
    ps, gps = psi(xc)
    outer_dens = np.einsum("cij,cj->c", grads * vals[:, :, None], gps) + ps * dens
    outer = float(np.sum(outer_dens) * w)
    return inner, outer


def inner_variation_by_differencing(
    grad_fn: Callable,
    phi: BumpVectorField,
    domain_box: tuple = (-1.0, 1.0),
    n_quad: int = 400,
    t: float = 1e-4,
) -> float:
    """``d/dt Dir(u o Phi_t)`` at ``t = 0`` by central differences.

    ``grad_fn(y)`` returns the sheet gradients of ``u`` at points ``y``
    (shape ``(..., Q, m)``).  ``Phi_t(x) = x + t phi(x)`` and
    ``D(u o Phi_t)(x) = Du(Phi_t(x)) (I + t Dphi(x))``; the energies are
    integrated with the midpoint rule on a square.
    """
    lo, hi = domain_box
    g = lo + (hi - lo) * (np.arange(n_quad) + 0.5) / n_quad
    X = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    w = ((hi - lo) / n_quad) ** 2
    ph, Dph = phi(X)

    def energy(tt):
        Y = X + tt * ph
        G = grad_fn(Y)  # (p, Q, m)
        M = np.eye(2)[None] + tt * Dph
        DG = np.einsum("pqj,pjk->pqk", G, M)
        return float(np.sum(DG**2) * w)

    return (energy(t) - energy(-t)) / (2 * t)
