import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from specq import embedret as E
from specq.fields import GridDomain, dirichlet_energy, example1_field
from specq.minimize import embedded_energy
from specq.qpoints import QPoint
from specq.specpoints import SpecPoint, metric_Gs, spec_norm

from .conftest import FINITE, specpoints


def isotonic_oracle(x: np.ndarray) -> np.ndarray:
    """Best nondecreasing fit among all block partitions with block means."""
    x = np.asarray(x, dtype=float)
    Q = len(x)
    best, best_y = math.inf, None
    for cuts in itertools.product([0, 1], repeat=Q - 1):
        bounds = [0] + [i + 1 for i, c in enumerate(cuts) if c] + [Q]
        y = np.concatenate([np.full(b - a, x[a:b].mean()) for a, b in zip(bounds[:-1], bounds[1:])])
        if np.all(np.diff(y) >= -1e-15):
            err = float(np.sum((x - y) ** 2))
            if err < best:
                best, best_y = err, y
    return best_y


def random_image_points(rng, count, Q=2, scale=1.0):
    atoms = rng.normal(size=(count, Q, 1)) * scale
    sign = rng.choice([-1, 1], size=count)
    return atoms, sign


class TestExplicitMaps:
    def test_R_pair_examples(self):
        x = np.array([1.5, -2.0])
        a, b = E.R_pair(x, np.zeros(2))
        assert np.array_equal(a, x) and np.array_equal(b, np.zeros(2))
        a, b = E.R_pair([2.0], [1.0])
        assert a == pytest.approx([1.0]) and b == pytest.approx([0.0])
        a, b = E.R_pair([3.0, 4.0], [0.0, 5.0])
        assert np.all(a == 0) and np.all(b == 0)

    def test_chi_delta_examples(self):
        assert E.chi_delta(0.2, 0.2) == 0.0
        assert E.chi_delta(1.0, 0.2) == 1.0
        assert E.chi_delta(0.6, 0.2) == pytest.approx(0.5)
        assert E.chi_delta(7.0, 0.2) == 1.0
        with pytest.raises(ValueError):
            E.chi_delta(0.5, 1.0)

    def test_R_delta_examples(self):
        d = 0.2
        a, b = E.R_delta([0.01, 0.02], [0.0, -0.03], d)
        assert np.all(a == 0) and np.all(b == 0)
        x = np.array([3.0, 4.0])
        a, b = E.R_delta(x, np.zeros(2), d)
        assert a == pytest.approx(x / 5.0) and np.all(b == 0)
        a, b = E.R_delta(np.zeros(2), [0.0, d], d)
        assert np.all(a == 0) and np.all(b == 0)
        with pytest.raises(ValueError):
            E.R_delta(x, x, 0.6)

    def test_R_delta_branches(self, rng):
        d = 0.1
        x = rng.normal(size=(500, 3))
        y = rng.normal(size=(500, 3))
        y *= (rng.uniform(0, d**2, size=500) / np.linalg.norm(y, axis=1))[:, None]
        a, b = E.R_delta(x, y, d)
        nx = np.linalg.norm(x, axis=1, keepdims=True)
        expected = E.chi_delta(nx, d) * x / nx
        assert np.allclose(a, expected, atol=1e-14) and np.all(b == 0)

    def test_R_pair_lipschitz_sampled(self, rng):
        x1, y1, x2, y2 = (rng.normal(size=(100_000, 2)) for _ in range(4))
        a1, b1 = E.R_pair(x1, y1)
        a2, b2 = E.R_pair(x2, y2)
        num = np.sqrt(np.sum((a1 - a2) ** 2 + (b1 - b2) ** 2, axis=1))
        den = np.sqrt(np.sum((x1 - x2) ** 2 + (y1 - y2) ** 2, axis=1))
        assert np.max(num / den) <= math.sqrt(2) + 1e-6


class TestIsotonic:
    @settings(max_examples=300, deadline=None)
    @given(hnp.arrays(float, st.integers(1, 6), elements=FINITE))
    def test_pava_matches_block_oracle(self, x):
        assert np.allclose(E.pava(x), isotonic_oracle(x), atol=1e-12)

    def test_batch_matches_pava(self, rng):
        for Q in (1, 2, 3, 4, 5):
            X = rng.normal(size=(200, Q))
            ref = np.stack([E.pava(x) for x in X])
            assert np.allclose(E.isotonic_batch(X), ref, atol=1e-12)

    def test_weighted(self):
        assert E.pava([3.0, 1.0], [1.0, 3.0]) == pytest.approx([1.5, 1.5])


class TestEmbedding:
    def test_registry(self):
        emb = E.get_embedding(3, 1)
        assert emb.name == "sorted-n1" and emb.N == 3
        assert emb.forward(QPoint([2, -1, 0])) == pytest.approx([-1, 0, 2])
        with pytest.raises(E.UnsupportedEmbedding):
            E.get_embedding(2, 2)
        with pytest.raises(E.UnsupportedEmbedding):
            E.get_embedding(2, 1, "whitney")

    @settings(max_examples=300, deadline=None)
    @given(specpoints(n=1))
    def test_zeta_norm_and_roundtrip(self, P):
        X = E.zeta(P)
        assert X.norm() == pytest.approx(spec_norm(P), abs=1e-12 * max(1.0, spec_norm(P)))
        assert X.in_image(1e-12 * max(1.0, spec_norm(P)))
        back = E.zeta_inv(X)
        assert metric_Gs(back, P) <= 1e-12 * max(1.0, spec_norm(P))

    def test_zeta_batch_agrees(self, rng):
        atoms, sign = random_image_points(rng, 300, Q=3)
        X = E.zeta_batch(atoms, sign)
        ref = np.stack([E.zeta(SpecPoint(a, s)).to_vector() for a, s in zip(atoms, sign)])
        assert np.allclose(X, ref, atol=1e-14)
        back, bsign = E.zeta_inv_batch(X, 3)
        assert np.allclose(np.sort(back[..., 0], axis=-1), np.sort(atoms[..., 0], axis=-1), atol=1e-12)
        assert np.array_equal(bsign, sign)

    def test_zeta_inv_rejects_off_image(self):
        with pytest.raises(ValueError):
            E.zeta_inv(E.EmbeddedPoint([-1, 1], [-1, 1], [0.0]))

    def test_grid_energy_preserved(self):
        u = example1_field(GridDomain("disk", 1 / 16), "diagonal")
        assert embedded_energy(u.embedded(), u.domain) == pytest.approx(dirichlet_energy(u), rel=1e-10)

    def test_embedding_is_isometric_on_pairs(self, rng):
        # On n = 1 the flat coordinates are isometric for same-sign pairs.
        for _ in range(200):
            P = SpecPoint(rng.normal(size=(3, 1)), 1)
            R = SpecPoint(rng.normal(size=(3, 1)), 1)
            d = np.linalg.norm(E.zeta(P).to_vector() - E.zeta(R).to_vector())
            assert d == pytest.approx(metric_Gs(P, R), abs=1e-12)


class TestRetraction:
    def test_identity_on_image_exact(self, rng):
        for Q in (2, 3, 4):
            atoms, sign = random_image_points(rng, 2000, Q, scale=rng.uniform(0.01, 100))
            X = E.zeta_batch(atoms, sign)
            assert np.array_equal(E.varrho_vec(X, Q), X)
            assert np.allclose(E.project_nearest(X, Q), X, rtol=0, atol=1e-14 * np.max(np.abs(X)))

    def test_identity_on_image_single(self):
        P = SpecPoint([0.3, -1.7, 2.2], -1)
        X = E.zeta(P)
        Y = E.varrho(X)
        assert np.array_equal(Y.to_vector(), X.to_vector())

    def test_near_perturbation_lands_in_image(self, rng):
        for Q in (2, 3):
            atoms, sign = random_image_points(rng, 1000, Q)
            X = E.zeta_batch(atoms, sign) + 1e-3 * rng.normal(size=(1000, 2 * Q + 1))
            Y = E.varrho_vec(X, Q)
            a, b = Y[:, :Q], Y[:, Q : 2 * Q]
            assert np.all(np.minimum(np.linalg.norm(a, axis=1), np.linalg.norm(b, axis=1)) == 0.0)
            assert all(E.EmbeddedPoint.from_vector(y, Q).in_image(1e-12) for y in Y)

    def test_retraction_lipschitz_sampled(self, rng):
        X1 = rng.normal(size=(50_000, 5))
        X2 = X1 + 0.1 * rng.normal(size=(50_000, 5))
        num = np.linalg.norm(E.varrho_vec(X1, 2) - E.varrho_vec(X2, 2), axis=1)
        den = np.linalg.norm(X1 - X2, axis=1)
        assert np.max(num / den) <= math.sqrt(2) + 1e-9

    def test_nearest_projection_q2_matches_general(self, rng):
        X = rng.normal(size=(5000, 5))
        a, b, z = X[:, :2], X[:, 2:4], X[:, 4:]
        pa = E.isotonic_batch(a) - E.isotonic_batch(a).mean(axis=1, keepdims=True)
        pb = E.isotonic_batch(b) - E.isotonic_batch(b).mean(axis=1, keepdims=True)
        pos = (np.sum((a - pa) ** 2, 1) + np.sum(b * b, 1)) <= (np.sum(a * a, 1) + np.sum((b - pb) ** 2, 1))
        ref = np.concatenate([np.where(pos[:, None], pa, 0), np.where(pos[:, None], 0, pb), z], axis=1)
        assert np.allclose(E.project_nearest(X, 2), ref, atol=1e-14)

    def test_nearest_projection_is_nearest(self, rng):
        X = rng.normal(size=(2000, 7))
        P = E.project_nearest(X, 3)
        d = np.linalg.norm(X - P, axis=1)
        atoms, sign = random_image_points(rng, 400, 3)
        cand = E.zeta_batch(atoms, sign)
        cand[:, 6] = 0.0
        for i in range(50):
            others = cand.copy()
            others[:, 6] = X[i, 6]
            assert d[i] <= np.min(np.linalg.norm(others - X[i], axis=1)) + 1e-12

    def test_cutoff_retraction_lands_in_image(self, rng):
        X = rng.normal(size=(1000, 7))
        for delta in (0.2, 0.1, 0.05):
            Y = E.varrho_star_vec(X, 3, delta)
            assert all(E.EmbeddedPoint.from_vector(y, 3).in_image(1e-12) for y in Y)

    def test_cutoff_displacement_unit_ball(self, rng):
        # On the unit ball the cut-off moves points of the image by at most delta.
        atoms = rng.normal(size=(1000, 2, 1))
        atoms -= atoms.mean(axis=1, keepdims=True)
        atoms *= (rng.uniform(0, 1, size=1000) / np.linalg.norm(atoms[..., 0], axis=1))[:, None, None]
        atoms += rng.normal(size=(1000, 1, 1))
        sign = rng.choice([-1, 1], size=1000)
        for delta in (0.1, 0.05):
            C = E.cutoff_displacement_constant(atoms, sign, delta)
            assert C * delta ** (1 / 64) <= delta + 1e-12

    def test_cutoff_displacement_literal_cap(self):
        # chi = 1 above 1 sends large centered parts to the unit sphere.
        P = SpecPoint([-2.0, 2.0], 1)
        Y = E.varrho_star(E.zeta(P), 0.1)
        assert np.linalg.norm(Y.a) == pytest.approx(1.0)

    def test_cutoff_energy_constant_stable(self):
        cs = {}
        for delta in (0.2, 0.1, 0.05):
            rng = np.random.default_rng(0)
            cs[delta] = max(
                E.cutoff_energy_constant(E.perturbed_circle_trace(rng, 512, 2, delta**3 * rng.uniform(0, 3)), 2, delta)
                for _ in range(6)
            )
        C = cs[0.2]
        assert all(c <= C for c in cs.values())
        assert min(cs.values()) >= 0.75 * C

    def test_cutoff_energy_terms_on_image(self, rng):
        F = E.random_circle_trace(rng, 256)
        e_star, e_near, e_far = E.cutoff_energy_terms(F, 2, 0.1)
        assert e_far == 0.0
        assert e_near == pytest.approx(E.circle_energy(F))


class TestLuckhaus:
    def test_constant_pair(self):
        P = SpecPoint([-0.5, 1.5], -1)
        F = np.tile(E.zeta(P).to_vector(), (64, 1))
        fld = E.luckhaus_interpolate(F, F, 0.2)
        assert np.array_equal(fld.X, np.broadcast_to(F, fld.X.shape))
        assert fld.energy() == 0.0

    def test_traces_exact(self, rng):
        F = E.random_circle_trace(rng, 128, 3)
        G = E.random_circle_trace(rng, 128, 3)
        fld = E.luckhaus_interpolate(F, G, 0.3)
        assert np.array_equal(fld.X[-1], F) and np.array_equal(fld.X[0], G)
        atoms, sign = fld.values()
        assert atoms.shape == (17, 128, 3, 1)

    def test_values_in_image(self, rng):
        F = E.random_circle_trace(rng, 64)
        G = E.random_circle_trace(rng, 64)
        fld = E.luckhaus_interpolate(F, G, 0.1)
        assert all(E.EmbeddedPoint.from_vector(x, 2).in_image(1e-12) for x in fld.X.reshape(-1, 5))

    @pytest.mark.parametrize("lam", [0.1, 0.25, 0.4])
    def test_opposite_constant_traces(self, lam):
        # The interpolant is (2t - 1) times the centered part on each side of
        # the mid circle, so its energy is (2/lam)^2 |a|^2 times the annulus
        # area and the ratio is exactly 2 - lam.
        K = 32
        f = [SpecPoint([-1.0, 1.0], 1)] * K
        g = [SpecPoint([-1.0, 1.0], -1)] * K
        fld = E.luckhaus_interpolate(f, g, lam)
        F, G = E._as_flat(f), E._as_flat(g)
        assert E.circle_distance2(F, G) == pytest.approx(2 * math.pi * metric_Gs(f[0], g[0]) ** 2)
        assert E.luckhaus_ratio(fld, f, g) == pytest.approx(2.0 - lam, rel=1e-12)

    def test_lambda_range(self, rng):
        F = E.random_circle_trace(rng, 16)
        for lam in (0.0, 0.5, 0.7):
            with pytest.raises(ValueError):
                E.luckhaus_interpolate(F, F, lam)

    def test_constant_fit(self):
        C, spread = E.luckhaus_constant_fit([1.0, 4.0])
        assert C == pytest.approx(2.0) and spread == pytest.approx(1.0)
        with pytest.raises(ValueError):
            E.luckhaus_constant_fit([1.0, 0.0])


class TestExtension:
    def test_constant_data(self):
        P = SpecPoint([0.0, 2.0], -1)
        out = E.lipschitz_extend([[0.0], [1.0]], [P, P], [[0.3], [5.0]])
        assert all(metric_Gs(p, P) <= 1e-12 for p in out)

    def test_two_sites(self):
        vals = [SpecPoint([-1.0, 1.0], 1), SpecPoint([-1.0, 1.0], -1)]
        sites = np.array([[0.0], [1.0]])
        pts = np.linspace(-0.5, 1.5, 41)[:, None]
        ext = E.lipschitz_extend(sites, vals, pts)
        lip_in = E.sampled_lipschitz(sites, vals)
        lip_out = E.sampled_lipschitz(np.concatenate([sites, pts]), vals + ext)
        assert lip_out <= 2.0 * lip_in
        assert max(spec_norm(p) for p in ext) <= max(spec_norm(v) for v in vals) + 1e-12

    def test_random_sup_bound(self, rng):
        sites = rng.uniform(-1, 1, size=(12, 2))
        vals = [SpecPoint(rng.normal(size=(2, 1)), int(rng.choice([-1, 1]))) for _ in sites]
        pts = rng.uniform(-2, 2, size=(50, 2))
        ext = E.lipschitz_extend(sites, vals, pts)
        assert max(spec_norm(p) for p in ext) <= max(spec_norm(v) for v in vals) + 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            E.lipschitz_extend(np.zeros((0, 1)), [], [[0.0]])
