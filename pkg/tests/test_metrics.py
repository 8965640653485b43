"""ROC construction, standardized pAUC, FPR@95, bootstrap SE."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from styledetect.errors import MetricError
from styledetect.metrics import RocCurve, auc, bootstrap_se, fpr_at_tpr, pauc, roc_curve
from styledetect.scoring import ScoreRecord


def records(pairs):
    return [ScoreRecord(f"q{i}", s, l, "s") for i, (l, s) in enumerate(pairs)]


PERFECT = records([(1, 0.9), (1, 0.8), (0, 0.2), (0, 0.1)])
# threshold sweep by hand: (0,0) -> (0,.5) -> (.5,.5) -> (.5,1) -> (1,1)
MIXED = records([(1, 0.9), (0, 0.8), (1, 0.7), (0, 0.6)])
INVERTED = records([(0, 0.9), (0, 0.8), (1, 0.2), (1, 0.1)])


class TestRocCurve:
    def test_perfect(self):
        curve = roc_curve(PERFECT)
        assert (0.0, 1.0) in zip(curve.fpr, curve.tpr)
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0

    def test_all_scores_equal(self):
        curve = roc_curve(records([(1, 0.5), (0, 0.5), (1, 0.5), (0, 0.5)]))
        assert list(curve.fpr) == [0.0, 1.0]
        assert list(curve.tpr) == [0.0, 1.0]

    def test_mixed_hand_sweep(self):
        curve = roc_curve(MIXED)
        assert list(zip(curve.fpr, curve.tpr)) == [
            (0.0, 0.0), (0.0, 0.5), (0.5, 0.5), (0.5, 1.0), (1.0, 1.0),
        ]

    def test_single_class_errors(self):
        with pytest.raises(MetricError) as err:
            roc_curve(records([(1, 0.1), (1, 0.2)]))
        assert err.value.code == "single-class"

    def test_monotone_validation(self):
        with pytest.raises(MetricError):
            RocCurve(np.array([0.0, 0.5, 0.4, 1.0]), np.array([0.0, 0.5, 0.6, 1.0]))

    @given(
        st.lists(
            st.tuples(st.integers(min_value=0, max_value=1),
                      st.floats(min_value=-5, max_value=5, allow_nan=False)),
            min_size=2, max_size=60,
        )
    )
    @settings(max_examples=150, deadline=None)
    def test_curve_monotone_and_label_swap(self, pairs):
        labels = {l for l, _ in pairs}
        if labels != {0, 1}:
            return
        curve = roc_curve(records(pairs))
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)
        swapped = roc_curve(records([(1 - l, s) for l, s in pairs]))
        assert auc(curve) + auc(swapped) == pytest.approx(1.0, abs=1e-12)


class TestPauc:
    def test_perfect_at_1pct(self):
        assert pauc(roc_curve(PERFECT), 0.01) == pytest.approx(1.0)

    def test_chance_curve(self):
        diagonal = RocCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        for max_fpr in (0.01, 0.1, 0.5, 1.0):
            assert pauc(diagonal, max_fpr) == pytest.approx(0.5, abs=1e-12)

    def test_inverted_closed_form(self):
        # raw partial area is 0, so the standardized floor applies
        expected = 0.5 * (1.0 - 5e-5 / 9.95e-3)
        assert pauc(roc_curve(INVERTED), 0.01) == pytest.approx(expected, abs=1e-12)

    def test_equals_auc_at_one_exactly(self):
        for recs in (PERFECT, MIXED, INVERTED):
            curve = roc_curve(recs)
            assert pauc(curve, 1.0) == auc(curve)

    def test_bad_max_fpr(self):
        curve = roc_curve(MIXED)
        for bad in (0.0, -0.1, 1.5):
            with pytest.raises(MetricError):
                pauc(curve, bad)

    def test_boundary_interpolation(self):
        # two negatives: fpr jumps 0 -> 0.5; interpolation at 0.25 is mandatory
        recs = records([(1, 0.9), (0, 0.8), (1, 0.7), (0, 0.1)])
        curve = roc_curve(recs)
        # curve points: (0,0) (0,.5) (.5,.5) (.5,1) (1,1)
        # at max_fpr=0.25: tpr interpolates to 0.5 over [0,0.25], raw = 0.125... by hand:
        # segment (0,0.5)-(0.5,0.5): tpr constant 0.5, raw = 0.25*0.5 = 0.125
        raw = 0.125
        expected = 0.5 * (1 + (raw - 0.5 * 0.25**2) / (0.25 - 0.5 * 0.25**2))
        assert pauc(curve, 0.25) == pytest.approx(expected, abs=1e-12)

    @given(
        st.lists(
            st.tuples(st.integers(min_value=0, max_value=1),
                      st.floats(min_value=-5, max_value=5, allow_nan=False)),
            min_size=4, max_size=40,
        ),
        st.floats(min_value=0.01, max_value=1.0),
        st.integers(min_value=0, max_value=1_000_000),
    )
    @settings(max_examples=100, deadline=None)
    def test_rank_invariance(self, pairs, max_fpr, seed):
        if {l for l, _ in pairs} != {0, 1}:
            return
        base = pauc(roc_curve(records(pairs)), max_fpr)
        # power-of-two scaling is exact in floats, hence strictly increasing
        scaled = [(l, 4.0 * s) for l, s in pairs]
        assert pauc(roc_curve(records(scaled)), max_fpr) == base
        # remap sorted unique scores onto a random strictly increasing sequence
        uniq = sorted({s for _, s in pairs})
        rng = np.random.default_rng(seed)
        new_values = np.cumsum(0.1 + rng.random(len(uniq)))
        remap = dict(zip(uniq, new_values))
        remapped = [(l, float(remap[s])) for l, s in pairs]
        assert pauc(roc_curve(records(remapped)), max_fpr) == base


class TestAuc:
    def test_perfect_and_diagonal(self):
        assert auc(roc_curve(PERFECT)) == pytest.approx(1.0)
        assert auc(RocCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]))) == pytest.approx(0.5)

    def test_mixed_fixture(self):
        assert auc(roc_curve(MIXED)) == pytest.approx(0.75)


class TestFprAtTpr:
    def test_perfect(self):
        assert fpr_at_tpr(roc_curve(PERFECT)) == pytest.approx(0.0)

    def test_diagonal(self):
        diagonal = RocCurve(np.array([0.0, 1.0]), np.array([0.0, 1.0]))
        assert fpr_at_tpr(diagonal, 0.95) == pytest.approx(0.95)

    def test_mixed_fixture(self):
        assert fpr_at_tpr(roc_curve(MIXED), 0.95) == pytest.approx(0.5)

    def test_reaches_one(self):
        assert fpr_at_tpr(roc_curve(INVERTED), 1.0) == pytest.approx(1.0)


def pauc_metric(recs):
    return pauc(roc_curve(recs), 0.01)


class TestBootstrap:
    def test_perfect_separation_zero_se(self):
        recs = records([(1, 1.0)] * 20 + [(0, 0.0)] * 20)
        mean, se = bootstrap_se(recs, pauc_metric, b=200, seed=0)
        assert mean == pytest.approx(1.0)
        assert se == 0.0

    def test_deterministic(self):
        rng = np.random.default_rng(0)
        recs = records([(1, float(rng.normal(1))) for _ in range(30)]
                       + [(0, float(rng.normal(0))) for _ in range(30)])
        assert bootstrap_se(recs, pauc_metric, 100, seed=7) == bootstrap_se(recs, pauc_metric, 100, seed=7)

    def test_stratified_keeps_both_classes(self):
        recs = records([(1, 0.8)] + [(0, float(x)) for x in np.linspace(0, 0.5, 50)])
        mean, se = bootstrap_se(recs, pauc_metric, 100, seed=1)
        assert np.isfinite(mean) and np.isfinite(se)

    def test_requires_both_classes(self):
        with pytest.raises(MetricError):
            bootstrap_se(records([(1, 0.5), (1, 0.4)]), pauc_metric, 10, seed=0)

    def test_requires_b_at_least_two(self):
        with pytest.raises(MetricError):
            bootstrap_se(records([(1, 0.5), (0, 0.4)]), pauc_metric, 1, seed=0)
