import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specq.qpoints import QPoint, eta, metric_G, norm, translate
from specq.specpoints import (
    CompatibilityViolation,
    RegionLabel,
    SpecPoint,
    TripleForm,
    classify,
    cone_project,
    cone_scale,
    iota,
    iota_inv,
    join_triple,
    metric_Gs,
    minus_part,
    plus_part,
    spec_norm,
)

from .conftest import specpoint_tuples, specpoints


def opposite_sign_oracle(P: SpecPoint, R: SpecPoint) -> float:
    """Distance through the collapsed points, written from scratch."""
    a, b = P.atoms, R.atoms
    ea, eb = a.mean(axis=0), b.mean(axis=0)
    return math.sqrt(float(np.sum((a - ea) ** 2) + np.sum((b - eb) ** 2) + len(a) * np.sum((ea - eb) ** 2)))


class TestExamples:
    def test_metric(self):
        assert metric_Gs(SpecPoint([0, 2], 1), SpecPoint([0, 2], -1)) == pytest.approx(2.0)
        assert metric_Gs(SpecPoint([3, 3], 1), SpecPoint([3, 3], -1)) == 0.0

    def test_iota(self):
        T = iota(SpecPoint([0, 2], 1))
        assert T.v == QPoint([-1, 1])
        assert T.w == QPoint([0, 0])
        assert T.z == pytest.approx([1.0])

    def test_classify(self):
        assert classify(SpecPoint([0, 2], 1)) is RegionLabel.Positive
        assert classify(SpecPoint([5, 5], -1)) is RegionLabel.Collapsed
        assert classify(SpecPoint([0, 1], -1)) is RegionLabel.Negative

    def test_join_triple(self):
        assert join_triple(QPoint([0, 2]), QPoint([1, 1]), [1.0]) == SpecPoint([0, 2], 1)
        P = join_triple(QPoint([3, 3]), QPoint([3, 3]), [3.0])
        assert P.is_collapsed() and P == SpecPoint([3, 3], -1)
        with pytest.raises(CompatibilityViolation):
            join_triple(QPoint([0, 2]), QPoint([0, 4]), [1.0])
        with pytest.raises(CompatibilityViolation):
            join_triple(QPoint([0, 2]), QPoint([2, 2]), [1.0])

    def test_cone_ops(self):
        P = SpecPoint([6, 8], -1)
        assert spec_norm(P) == pytest.approx(10.0)
        half = cone_project(P, 5.0)
        assert np.allclose(half.atoms, [[3.0], [4.0]]) and half.sign == -1
        assert cone_project(P, 11.0) is P
        assert cone_scale(P, 0.0) == SpecPoint([0, 0], 1)
        with pytest.raises(ValueError):
            cone_scale(P, -1.0)


class TestSpecPoint:
    def test_collapsed_sign_normalized(self):
        P = SpecPoint([2, 2], -1)
        assert P.sign == 1
        assert P == SpecPoint([2, 2], 1)
        assert hash(P) == hash(SpecPoint([2, 2], 1))
        assert P.to_json()["sign"] == 1

    def test_json_roundtrip(self):
        P = SpecPoint([[1.0, 2.0], [0.0, -1.0]], -1)
        assert SpecPoint.from_json(P.to_json()) == P
        with pytest.raises(ValueError):
            SpecPoint.from_json({"sign": 1})

    def test_bad_sign(self):
        with pytest.raises(ValueError):
            SpecPoint([0, 1], 0)

    def test_triple_invariants(self):
        with pytest.raises(ValueError):
            TripleForm(QPoint([0, 2]), QPoint([0, 0]), [0.0])
        with pytest.raises(ValueError):
            iota_inv(TripleForm(QPoint([-1, 1]), QPoint([-1, 1]), [0.0]))

    def test_parts(self):
        P = SpecPoint([0, 2], -1)
        assert plus_part(P) == QPoint([1, 1])
        assert minus_part(P) == P.base


@settings(max_examples=300, deadline=None)
@given(specpoint_tuples(3))
def test_metric_axioms(triple):
    P, R, S = triple
    assert metric_Gs(P, P) == 0.0
    assert metric_Gs(P, R) == metric_Gs(R, P)
    assert metric_Gs(P, S) <= metric_Gs(P, R) + metric_Gs(R, S) + 1e-12


@settings(max_examples=300, deadline=None)
@given(specpoint_tuples(2))
def test_metric_branches(pair):
    P, R = pair
    if P.sign == R.sign:
        assert metric_Gs(P, R) == metric_G(P.base, R.base)
    else:
        assert metric_Gs(P, R) == pytest.approx(opposite_sign_oracle(P, R), rel=1e-12, abs=1e-12)


@settings(max_examples=300, deadline=None)
@given(specpoint_tuples(2))
def test_iota_isometry(pair):
    P, R = pair
    tp, tr = iota(P), iota(R)
    prod = math.sqrt(metric_G(tp.v, tr.v) ** 2 + metric_G(tp.w, tr.w) ** 2 + P.Q * float(np.sum((tp.z - tr.z) ** 2)))
    assert prod == pytest.approx(metric_Gs(P, R), abs=1e-12 * max(1.0, metric_Gs(P, R)))


@settings(max_examples=300, deadline=None)
@given(specpoints())
def test_iota_roundtrip(P):
    back = iota_inv(iota(P))
    assert back.sign == P.sign
    assert metric_G(back.base, P.base) <= 1e-12 * max(1.0, norm(P.base))
    T = iota(P)
    assert min(norm(T.v), norm(T.w)) == 0.0


@settings(max_examples=300, deadline=None)
@given(specpoints())
def test_join_triple_right_inverse(P):
    e = eta(P.base)
    joined = join_triple(plus_part(P), minus_part(P), e)
    assert joined == P


@settings(max_examples=300, deadline=None)
@given(specpoints())
def test_label_matches_triple(P):
    T = iota(P)
    expected = (
        RegionLabel.Positive if norm(T.v) > 0 else RegionLabel.Negative if norm(T.w) > 0 else RegionLabel.Collapsed
    )
    assert classify(P) is expected


@settings(max_examples=200, deadline=None)
@given(specpoint_tuples(2), st.floats(0.0, 20.0))
def test_cone_project_is_contraction(pair, M):
    P, R = pair
    pP, pR = cone_project(P, M), cone_project(R, M)
    assert spec_norm(pP) <= M + 1e-12 or spec_norm(pP) == spec_norm(P) <= M
    assert metric_Gs(pP, pR) <= metric_Gs(P, R) + 1e-9

