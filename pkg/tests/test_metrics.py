import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adafocal.binning import EvalBatch, compute_bin_stats, equal_mass_partition
from adafocal.metrics import (
    EceReport,
    auroc,
    ece_debias,
    ece_em,
    ece_ew,
    ece_report,
    ece_sweep,
    ece_sweep_bins,
    entropy,
    parse_reliability_csv,
    reliability_csv,
    reliability_data,
    roc_curve,
)

import oracles


def two_class(confs, correct):
    confs = np.asarray(confs, dtype=float)
    return EvalBatch(np.stack([confs, 1 - confs], 1), np.where(correct, 0, 1))


@pytest.fixture(params=range(5))
def random_batch(request):
    rng = np.random.default_rng(100 + request.param)
    probs, labels = oracles.random_records(rng, n=200, k=int(rng.integers(2, 5)))
    return probs, labels


class TestEceEqualWidth:
    def test_perfect(self):
        assert ece_ew(two_class([1.0] * 5, [True] * 5)) == 0.0

    def test_hand_case(self):
        assert ece_ew(two_class([0.9, 0.9], [True, False]), 1) == pytest.approx(0.4, abs=1e-15)

    def test_oracle(self, random_batch):
        probs, labels = random_batch
        for m in (1, 7, 15):
            got = ece_ew(EvalBatch(probs, labels), m)
            assert abs(got - oracles.ece_equal_width(probs, labels, m)) < 1e-12

    def test_empty(self):
        with pytest.raises(ValueError):
            ece_ew([])


class TestEceEqualMass:
    def test_single_record(self):
        assert ece_em(two_class([0.8], [False])) == pytest.approx(0.8)
        assert ece_em(two_class([0.8], [True])) == pytest.approx(0.2)

    def test_single_bin_identity(self, random_batch):
        b = EvalBatch(*random_batch)
        direct = abs(b.top_conf.mean() - b.correct.mean())
        assert ece_em(b, 1) == pytest.approx(direct, abs=1e-14)
        assert ece_ew(b, 1) == pytest.approx(direct, abs=1e-14)

    def test_oracle(self, random_batch):
        probs, labels = random_batch
        for m in (1, 2, 15, 40):
            got = ece_em(EvalBatch(probs, labels), m)
            assert abs(got - oracles.ece_equal_mass(probs, labels, m)) < 1e-12

    def test_permutation_invariant(self, random_batch):
        probs, labels = random_batch
        perm = np.random.default_rng(0).permutation(len(labels))
        for fn in (ece_ew, ece_em, ece_debias, ece_sweep):
            assert fn(EvalBatch(probs, labels)) == pytest.approx(
                fn(EvalBatch(probs[perm], labels[perm])), abs=1e-14
            )


class TestEceDebias:
    def test_zero_error_point_masses(self):
        assert ece_debias(two_class([1.0] * 10, [True] * 10)) == 0.0

    def test_hand_case(self):
        # C = 0.9, A = 0.2, n = 5: (0.7)^2 - 0.2*0.8/4 = 0.45
        b = two_class([0.9] * 5, [True, False, False, False, False])
        assert ece_debias(b, 1) == pytest.approx(math.sqrt(0.45), abs=1e-12)
        assert ece_debias(b, 1) == pytest.approx(0.67082, abs=1e-5)
        assert ece_debias(b) == pytest.approx(math.sqrt(0.45), abs=1e-12)

    def test_negative_total_floored(self):
        b = two_class([0.5, 0.5, 0.5, 0.5], [True, False, True, False])
        assert ece_debias(b, 1) == 0.0

    def test_bin_terms_summed_before_floor(self):
        # bin 0: C=0.6, A=0.5, n=4 -> 0.01 - 0.25/3 ; bin 1: C=0.9, A=0, n=2 -> 0.81
        b = two_class([0.6] * 4 + [0.9] * 2, [True, False, True, False, False, False])
        expected = math.sqrt(4 / 6 * (0.01 - 0.25 / 3) + 2 / 6 * 0.81)
        assert ece_debias(b, 2, "equal_mass") == pytest.approx(expected, abs=1e-12)

    def test_singleton_bins_contribute_nothing(self):
        assert ece_debias(two_class([0.9, 0.6], [False, False]), 2) == 0.0

    def test_bias_reduction_simulation(self):
        mean_debias, mean_ew, upper = oracles.debias_bias_simulation(ece_debias, ece_ew)
        assert mean_debias < mean_ew
        assert upper < 0


class TestEceSweep:
    def test_oracle(self, random_batch):
        probs, labels = random_batch
        b = EvalBatch(probs, labels)
        for scheme in ("equal_mass", "equal_width"):
            value, m = ece_sweep_bins(b, scheme)
            o_value, o_m = oracles.ece_sweep(probs, labels, scheme)
            assert m == o_m
            assert abs(value - o_value) < 1e-12

    def test_monotone_data_reaches_n(self):
        confs = np.linspace(0.55, 0.95, 12)
        correct = np.array([False] * 5 + [True] * 7)
        value, m = ece_sweep_bins(two_class(confs, correct), "equal_mass")
        assert m == 12
        assert value == pytest.approx(oracles.ece_sweep(*_arrays(confs, correct), "equal_mass")[0], abs=1e-12)

    def test_degenerate_single_bin(self):
        confs = [0.6, 0.7, 0.8, 0.9]
        correct = [True, True, False, False]
        value, m = ece_sweep_bins(two_class(confs, correct), "equal_mass")
        assert m == 1
        assert value == pytest.approx(abs(0.75 - 0.5), abs=1e-15)


def _arrays(confs, correct):
    confs = np.asarray(confs, dtype=float)
    return np.stack([confs, 1 - confs], 1), np.where(correct, 0, 1)


class TestReport:
    def test_report_fields(self, random_batch):
        b = EvalBatch(*random_batch)
        r = ece_report(b)
        assert r.ece_ew == ece_ew(b) and r.ece_em == ece_em(b)
        assert r.ece_sweep_em == ece_sweep(b, "em")
        d = r.to_dict()
        assert set(d) == {"ece_ew", "ece_em", "ece_debias", "ece_sweep_ew", "ece_sweep_em", "num_bins"}
        assert EceReport.from_dict(d) == r
        assert all(0 <= v <= 1 for k, v in d.items() if k != "num_bins")


class TestReliability:
    def test_perfect_classifier(self):
        rng = np.random.default_rng(0)
        probs = rng.dirichlet(np.ones(3), size=60)
        rows = reliability_data(EvalBatch(probs, probs.argmax(1)), 10)
        assert all(r.acc == 1.0 for r in rows if r.count)

    def test_matches_bin_stats(self, random_batch):
        b = EvalBatch(*random_batch)
        rows = reliability_data(b, 15, "em")
        stats = compute_bin_stats(b, equal_mass_partition(b.top_conf, 15))
        for r, s in zip(rows, stats.to_rows()):
            assert (r.bin, r.lower, r.upper, r.count, r.conf, r.acc) == (
                s["bin"], s["lower"], s["upper"], s["count"], s["conf"], s["acc"])

    def test_csv_round_trip(self, random_batch):
        rows = reliability_data(EvalBatch(*random_batch), 15, "ew")
        text = reliability_csv(rows)
        assert text.splitlines()[0] == "bin,lower,upper,count,conf,acc"
        assert parse_reliability_csv(text) == rows


class TestEntropy:
    def test_examples(self):
        assert entropy([0.0, 1.0, 0.0]) == 0.0
        assert entropy(np.full(7, 1 / 7)) == pytest.approx(math.log(7), abs=1e-14)
        assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.5 * math.log(2), abs=1e-15)
        assert entropy([0.5, 0.25, 0.25]) == pytest.approx(1.039721, abs=1e-6)

    def test_rows(self):
        np.testing.assert_allclose(entropy([[1.0, 0.0], [0.5, 0.5]]), [0.0, math.log(2)])


class TestAuroc:
    def test_examples(self):
        assert auroc([0.1, 0.2], [0.5, 0.9]) == 1.0
        assert auroc([0.3] * 4, [0.3] * 6) == 0.5
        assert auroc([0.9], [0.1]) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_pairwise_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a = rng.normal(size=100).round(1)
        b = rng.normal(0.5, size=100).round(1)
        assert abs(auroc(a, b) - oracles.auroc_pairs(a.tolist(), b.tolist())) < 1e-12

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_invariant_under_increasing_transform(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.uniform(0, 3, 40), rng.uniform(0.5, 3.5, 30)
        assert auroc(np.exp(a), np.exp(b)) == auroc(a, b)
        assert auroc(a**3 + 2 * a, b**3 + 2 * b) == auroc(a, b)

    def test_empty(self):
        with pytest.raises(ValueError):
            auroc([], [1.0])

    def test_identical_sets(self):
        s = np.random.default_rng(0).uniform(size=50)
        assert auroc(s, s) == 0.5


class TestRocCurve:
    def test_endpoints_and_monotone(self):
        rng = np.random.default_rng(3)
        roc = roc_curve(rng.normal(size=80), rng.normal(1, size=60))
        assert (roc.fpr[0], roc.tpr[0]) == (0.0, 0.0)
        assert (roc.fpr[-1], roc.tpr[-1]) == (1.0, 1.0)
        assert all(a <= b for a, b in zip(roc.fpr, roc.fpr[1:]))
        assert all(a <= b for a, b in zip(roc.tpr, roc.tpr[1:]))
        assert roc.thresholds[0] is None

    def test_trapezoid_area_equals_auroc(self):
        rng = np.random.default_rng(4)
        a, b = rng.integers(0, 5, 50).astype(float), rng.integers(1, 6, 40).astype(float)
        roc = roc_curve(a, b)
        area = sum((roc.fpr[i + 1] - roc.fpr[i]) * (roc.tpr[i + 1] + roc.tpr[i]) / 2
                   for i in range(len(roc.fpr) - 1))
        assert area == pytest.approx(roc.auroc, abs=1e-12)
