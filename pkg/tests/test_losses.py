import math

import numpy as np
import pytest

from adafocal.errors import DomainError
from adafocal.losses import (
    adafocal_loss,
    brier_loss,
    calfocal_case1_loss,
    calfocal_gamma_case1,
    calfocal_gamma_case2,
    cross_entropy,
    focal_loss,
    inverse_focal_loss,
    label_smoothing_ce,
)

LN2 = math.log(2.0)
GRID = np.linspace(1e-3, 1.0, 1000)
INTERIOR = np.linspace(0.01, 0.99, 500)


def fd(f, p, h=1e-6):
    return (f(p + h) - f(p - h)) / (2 * h)


class TestCrossEntropy:
    def test_examples(self):
        assert cross_entropy(1.0).value == 0.0
        assert cross_entropy(0.5).value == pytest.approx(0.693147, abs=1e-6)
        assert cross_entropy(0.25).dvalue_dp == -4.0

    def test_matches_focal_gamma_zero_random(self):
        p = np.random.default_rng(0).uniform(1e-6, 1.0, 100)
        np.testing.assert_allclose(focal_loss(p, 0.0).value, cross_entropy(p).value, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("p", [0.0, -0.1, 1.0000001, np.nan])
    def test_domain(self, p):
        with pytest.raises(DomainError):
            cross_entropy(p)


class TestFocal:
    def test_examples(self):
        assert focal_loss(0.5, 2.0).value == pytest.approx(0.25 * LN2, abs=1e-12)
        assert focal_loss(0.5, 2.0).value == pytest.approx(0.173287, abs=1e-6)
        for g in (0.5, 1.0, 3.0):
            assert focal_loss(1.0, g).value == 0.0

    def test_derivative_at_one(self):
        assert focal_loss(1.0, 0.0).dvalue_dp == -1.0
        for g in (0.3, 1.0, 2.0):
            assert focal_loss(1.0, g).dvalue_dp == 0.0
            assert math.isfinite(focal_loss(1.0 - 1e-12, g).dvalue_dp)

    def test_negative_gamma_rejected(self):
        with pytest.raises(DomainError):
            focal_loss(0.5, -1.0)

    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0, 5.0])
    def test_bounded_by_cross_entropy(self, gamma):
        p = GRID[:-1]
        assert np.all(focal_loss(p, gamma).value <= cross_entropy(p).value)


class TestInverseFocal:
    def test_examples(self):
        assert inverse_focal_loss(0.5, 1.0).value == pytest.approx(1.5 * LN2, abs=1e-12)
        assert inverse_focal_loss(0.5, 1.0).value == pytest.approx(1.039721, abs=1e-6)

    def test_increasing_in_gamma(self):
        vals = [inverse_focal_loss(0.9, g).value for g in (0, 1, 2, 3)]
        assert all(a < b for a, b in zip(vals, vals[1:]))

    @pytest.mark.parametrize("gamma", [0.5, 1.0, 2.0])
    def test_dominates_cross_entropy(self, gamma):
        p = GRID[:-1]
        assert np.all(inverse_focal_loss(p, gamma).value >= cross_entropy(p).value)


class TestReductionIdentities:
    def test_gamma_zero_is_cross_entropy_on_grid(self):
        ce = cross_entropy(GRID)
        for fn in (focal_loss, inverse_focal_loss, adafocal_loss):
            out = fn(GRID, 0.0)
            assert np.max(np.abs(out.value - ce.value)) < 1e-12
            assert np.max(np.abs(out.dvalue_dp - ce.dvalue_dp)) < 1e-12

    def test_adafocal_continuous_at_zero(self):
        for eps in (1e-9, 1e-12):
            up = adafocal_loss(GRID, eps).value
            down = adafocal_loss(GRID, -eps).value
            assert np.max(np.abs(up - down)) < 1e-6


class TestCalFocalGamma:
    def test_case1_examples(self):
        assert calfocal_gamma_case1(0.7, 0.7, 3.0) == 1.0
        assert calfocal_gamma_case1(0.6, 0.5, 10.0) == pytest.approx(math.e, rel=1e-12)
        assert calfocal_gamma_case1(0.4, 0.5, 10.0) == pytest.approx(math.exp(-1), rel=1e-12)
        assert calfocal_gamma_case1(0.4, 0.5, 10.0) == pytest.approx(0.36788, abs=1e-5)

    def test_case2_examples(self):
        assert calfocal_gamma_case2(0.3, 0.3, 1.0) == 1.0
        assert calfocal_gamma_case2(0.9, 0.7, 1.0) == pytest.approx(1.22140, abs=1e-5)
        assert calfocal_gamma_case2(0.7, 0.9, 1.0) == pytest.approx(0.81873, abs=1e-5)

    def test_domain(self):
        with pytest.raises(DomainError):
            calfocal_gamma_case2(1.2, 0.5, 1.0)
        with pytest.raises(DomainError):
            calfocal_gamma_case1(0.5, 0.5, -1.0)


class TestAdaFocal:
    def test_examples(self):
        assert adafocal_loss(0.5, 2.0).value == pytest.approx(0.173287, abs=1e-6)
        assert adafocal_loss(0.5, -1.0).value == pytest.approx(1.039721, abs=1e-6)
        assert adafocal_loss(0.5, 0.0).value == pytest.approx(LN2, abs=1e-15)

    def test_branches_vectorised(self):
        p = np.array([0.2, 0.5, 0.8])
        g = np.array([2.0, -1.5, 0.0])
        out = adafocal_loss(p, g)
        expected = [
            focal_loss(0.2, 2.0).value,
            inverse_focal_loss(0.5, 1.5).value,
            cross_entropy(0.8).value,
        ]
        np.testing.assert_allclose(out.value, expected, rtol=1e-15)


class TestDerivatives:
    @pytest.mark.parametrize(
        "fn",
        [
            cross_entropy,
            lambda p: focal_loss(p, 0.5),
            lambda p: focal_loss(p, 2.0),
            lambda p: focal_loss(p, 5.0),
            lambda p: inverse_focal_loss(p, 1.0),
            lambda p: inverse_focal_loss(p, 2.0),
            lambda p: adafocal_loss(p, -1.7),
            lambda p: adafocal_loss(p, 3.3),
            lambda p: calfocal_case1_loss(p, 0.6, 1.0),
            lambda p: calfocal_case1_loss(p, 0.3, 2.0),
        ],
    )
    def test_finite_differences(self, fn):
        analytic = fn(INTERIOR).dvalue_dp
        numeric = fd(lambda q: fn(q).value, INTERIOR)
        rel = np.abs(analytic - numeric) / np.maximum(np.abs(analytic), 1e-300)
        assert np.max(rel) < 1e-6


class TestBrier:
    def test_examples(self):
        assert brier_loss([0.0, 1.0, 0.0], 1).value == 0.0
        assert brier_loss([0.5, 0.5], 0).value == pytest.approx(0.5, abs=1e-15)
        assert brier_loss([0.0, 1.0], 0).value == 2.0

    def test_gradient(self):
        out = brier_loss([0.2, 0.3, 0.5], 2)
        np.testing.assert_allclose(out.dvalue_dp, [0.4, 0.6, -1.0], atol=1e-15)

    def test_batched(self):
        out = brier_loss([[0.5, 0.5], [1.0, 0.0]], [0, 0])
        np.testing.assert_allclose(out.value, [0.5, 0.0])


class TestLabelSmoothing:
    def test_eps_zero_is_cross_entropy(self):
        probs = [0.1, 0.6, 0.3]
        assert label_smoothing_ce(probs, 1, 0.0).value == pytest.approx(-math.log(0.6), abs=1e-15)

    @pytest.mark.parametrize("eps", [0.0, 0.05, 0.3, 0.9])
    def test_two_class_uniform(self, eps):
        assert label_smoothing_ce([0.5, 0.5], 0, eps).value == pytest.approx(LN2, abs=1e-15)

    def test_ten_class_uniform(self):
        assert label_smoothing_ce(np.full(10, 0.1), 3, 0.05).value == pytest.approx(math.log(10), abs=1e-12)

    def test_gradient(self):
        probs = np.array([0.2, 0.5, 0.3])
        out = label_smoothing_ce(probs, 1, 0.3)
        q = np.array([0.1, 0.8, 0.1])
        np.testing.assert_allclose(out.dvalue_dp, -q / probs, atol=1e-15)
