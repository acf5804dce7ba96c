"""Quick property suites behind ``specq verify``.

Each suite is a list of named checks; a check returns ``(passed, detail)``.
The suites are small, seeded versions of the properties exercised by the
test suite, meant for a fast sanity run of an installed tree.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import embedret, fields, frequency, graphs, minimize, qpoints, specpoints

Check = Callable[[np.random.Generator], tuple[bool, str]]


def _random_qpoint(rng, Q, n):
    return qpoints.QPoint(rng.normal(size=(Q, n)))


def _metric_axioms(rng):
    worst = 0.0
    for _ in range(500):
        Q, n = int(rng.integers(1, 5)), int(rng.integers(1, 4))
        S, T, U = (_random_qpoint(rng, Q, n) for _ in range(3))
        d = qpoints.metric_G
        worst = max(worst, d(S, U) - d(S, T) - d(T, U), abs(d(S, T) - d(T, S)))
    return worst <= 1e-12, f"worst violation {worst:.2e}"


def _assignment_vs_bruteforce(rng):
    worst = 0.0
    for _ in range(300):
        Q, n = int(rng.integers(1, 6)), int(rng.integers(1, 4))
        S, T = _random_qpoint(rng, Q, n), _random_qpoint(rng, Q, n)
        a = qpoints.metric_G(S, T, method="assignment")
        b = qpoints.metric_G_bruteforce(S, T)
        worst = max(worst, abs(a - b))
    return worst <= 1e-12, f"max difference {worst:.2e}"


def _iota_isometry(rng):
    worst = 0.0
    for _ in range(300):
        Q, n = int(rng.integers(2, 5)), int(rng.integers(1, 4))
        P = specpoints.SpecPoint(rng.normal(size=(Q, n)), int(rng.choice([-1, 1])))
        R = specpoints.SpecPoint(rng.normal(size=(Q, n)), int(rng.choice([-1, 1])))
        tp, tr = specpoints.iota(P), specpoints.iota(R)
        prod = math.sqrt(
            qpoints.metric_G(tp.v, tr.v) ** 2 + qpoints.metric_G(tp.w, tr.w) ** 2 + Q * float(np.sum((tp.z - tr.z) ** 2))
        )
        worst = max(worst, abs(prod - specpoints.metric_Gs(P, R)))
    return worst <= 1e-12, f"max defect {worst:.2e}"


def _zeta_norm(rng):
    atoms = rng.normal(size=(2000, 3, 1))
    sign = rng.choice([-1, 1], size=2000)
    X = embedret.zeta_batch(atoms, sign)
    d = np.max(np.abs(np.linalg.norm(X, axis=-1) - np.sqrt(np.sum(atoms**2, axis=(-2, -1)))))
    return d <= 1e-12, f"max defect {d:.2e}"


def _rpair_lipschitz(rng):
    N = 3
    x1, y1, x2, y2 = (rng.normal(size=(20000, N)) for _ in range(4))
    a1, b1 = embedret.R_pair(x1, y1)
    a2, b2 = embedret.R_pair(x2, y2)
    num = np.sqrt(np.sum((a1 - a2) ** 2 + (b1 - b2) ** 2, axis=-1))
    den = np.sqrt(np.sum((x1 - x2) ** 2 + (y1 - y2) ** 2, axis=-1))
    L = float(np.max(num / den))
    return L <= math.sqrt(2) + 1e-6, f"sampled Lip {L:.6f}"


def _varrho_identity(rng):
    atoms = rng.normal(size=(1000, 3, 1))
    sign = rng.choice([-1, 1], size=1000)
    X = embedret.zeta_batch(atoms, sign)
    ok = np.array_equal(embedret.varrho_vec(X, 3), X)
    return bool(ok), "exact" if ok else "differs"


def _split_energy(rng):
    d = fields.GridDomain("disk", 1 / 16)
    u = fields.example1_field(d, "quadrant")
    tot, cen, bar = fields.split_energy_check(u)
    err = abs(tot - cen - u.Q * bar) / tot
    return err <= 1e-12, f"relative defect {err:.2e}"


def _harmonic_collapsed(rng):
    d = fields.GridDomain("square", 1 / 8)
    u0 = fields.linear_field(d, [0.7, -0.3])
    u, rep = minimize.solve_dirichlet(u0)
    err = float(np.max(np.abs(u.atoms - u0.atoms)))
    return err <= 1e-8, f"max nodal error {err:.2e}"


def _monotone_energy(rng):
    d = fields.GridDomain("disk", 1 / 16)
    u0 = fields.example1_field(d, "quadrant")
    _, rep = minimize.solve_dirichlet(u0)
    diffs = np.diff(rep.energy_trace)
    ok = bool(np.all(diffs <= 1e-12 * rep.energy_trace[0]))
    return ok and rep.energy <= rep.initial_energy, f"E {rep.initial_energy:.4f} -> {rep.energy:.4f}"


def _linear_frequency(rng):
    d = fields.GridDomain("disk", 1 / 32)
    p = frequency.frequency_profile(fields.linear_field(d, [1.0, 0.5]))
    err = float(np.nanmax(np.abs(p.I - 1.0)))
    return err <= 0.02, f"max |I - 1| {err:.2e}"


def _homogeneous_frequency(rng):
    d = fields.GridDomain("disk", 1 / 32)
    u = fields.example1_field(d, "quadrant")
    p = frequency.frequency_profile(u, radii=np.linspace(0.2, 0.8, 7))
    err = float(np.nanmax(np.abs(p.I - 2.0)))
    return err <= 0.04, f"max |I - 2| {err:.2e}"


def _graph_mass(rng):
    m = graphs.graph_mass(graphs.example1_spec(), graphs.Disk())
    exact = math.pi + 2 * math.pi * (37**1.5 - 1) / 108
    return abs(m - exact) <= 1e-8, f"mass {m:.10f}"


def _mvector_norm(rng):
    G = rng.normal(size=(1000, 1, 2))
    v = graphs.mvector(G)
    err = float(np.max(np.abs(np.linalg.norm(v.coords, axis=-1) - 1.0)))
    return err <= 1e-12, f"max defect {err:.2e}"


def _taylor_order(rng):
    rep = graphs.taylor_mass_check(graphs.example1_spec(scale=1 / 6), [0.1, 0.05, 0.025])
    return rep.slope >= 3.8, f"slope {rep.slope:.3f}"


def _luckhaus_traces(rng):
    K = 32
    f = embedret.zeta_batch(rng.normal(size=(K, 2, 1)), rng.choice([-1, 1], size=K))
    g = embedret.zeta_batch(rng.normal(size=(K, 2, 1)), rng.choice([-1, 1], size=K))
    fld = embedret.luckhaus_interpolate(f, g, 0.2)
    ok = np.array_equal(fld.X[-1], f) and np.array_equal(fld.X[0], g)
    return bool(ok), "exact" if ok else "differs"


SUITES: dict[str, list[tuple[str, Check]]] = {
    "metric": [
        ("metric axioms", _metric_axioms),
        ("assignment = brute force", _assignment_vs_bruteforce),
        ("iota isometry", _iota_isometry),
    ],
    "embedding": [
        ("zeta preserves norms", _zeta_norm),
        ("R_pair Lipschitz", _rpair_lipschitz),
        ("varrho identity on image", _varrho_identity),
        ("Luckhaus traces", _luckhaus_traces),
    ],
    "fields": [("energy split identity", _split_energy)],
    "minimize": [
        ("collapsed data is harmonic", _harmonic_collapsed),
        ("energy nonincreasing", _monotone_energy),
    ],
    "frequency": [
        ("linear field I = 1", _linear_frequency),
        ("homogeneous field I = 2", _homogeneous_frequency),
    ],
    "graphs": [
        ("graph mass", _graph_mass),
        ("unit m-vectors", _mvector_norm),
        ("quartic mass remainder", _taylor_order),
    ],
}


def run_suite(name: str, seed: int = 0) -> list[tuple[str, str, bool, str]]:
    """Run one suite (or ``"all"``); returns ``(suite, check, passed, detail)`` rows."""
    names = list(SUITES) if name == "all" else [name]
    rows = []
    for s in names:
        if s not in SUITES:
            raise KeyError(f"unknown suite {s!r}; choose from {', '.join(['all', *SUITES])}")
        for label, fn in SUITES[s]:
            rng = np.random.default_rng(seed)
            try:
                ok, detail = fn(rng)
            except Exception as exc:  # reported as a failed check
                ok, detail = False, f"error: {exc}"
            rows.append((s, label, bool(ok), detail))
    return rows
