"""Margin classifier, evaluation metrics, and cross-validation."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hawkescohort import classifier, features
from hawkescohort.eventlog import Label
from oracles import pairwise_auc, svm_grid_minimum, svm_objective_reference


class TestTrainSvm:
    def test_one_dimensional_oracle(self):
        # Analytic minimum of 0.5 w^2 + 10 (hinge at +-2): the objective is
        # decreasing until the margin reaches 1 at w = 0.5, so w* = 0.5,
        # b* = 0 by symmetry, objective 0.125.
        points = np.array([[-2.0], [2.0]])
        targets = np.array([-1.0, 1.0])
        svm = classifier.train_svm(points, targets, C=10.0)
        assert svm.weights[0] == pytest.approx(0.5, abs=1e-3)
        assert svm.bias == pytest.approx(0.0, abs=1e-3)
        obj = classifier.svm_objective(svm.weights, svm.bias, points, targets, 10.0)
        assert obj == pytest.approx(0.125, abs=1e-3)

    def test_duplication_with_halved_c(self):
        rng = np.random.default_rng(0)
        points = rng.normal(size=(12, 3))
        targets = np.where(points[:, 0] + 0.3 * rng.normal(size=12) > 0, 1.0, -1.0)
        if len(np.unique(targets)) < 2:
            targets[0] = -targets[0]
        base = classifier.train_svm(points, targets, C=2.0)
        doubled = classifier.train_svm(
            np.repeat(points, 2, axis=0), np.repeat(targets, 2), C=1.0
        )
        np.testing.assert_allclose(doubled.weights, base.weights, rtol=1e-10, atol=1e-12)
        assert doubled.bias == pytest.approx(base.bias, abs=1e-12)

    def test_never_worse_than_origin(self):
        rng = np.random.default_rng(3)
        for trial in range(10):
            n = int(rng.integers(4, 30))
            points = rng.normal(size=(n, 2))
            targets = np.where(rng.uniform(size=n) < 0.5, 1.0, -1.0)
            if len(np.unique(targets)) < 2:
                targets[0] = -targets[0]
            C = float(rng.choice([0.1, 1.0, 10.0]))
            svm = classifier.train_svm(points, targets, C)
            obj = classifier.svm_objective(svm.weights, svm.bias, points, targets, C)
            assert obj <= C * n + 1e-12

    def test_matches_grid_oracle_2d(self):
        rng = np.random.default_rng(42)
        for trial in range(10):
            n = int(rng.integers(6, 20))
            points = rng.normal(size=(n, 2))
            targets = np.where(
                points @ np.array([1.0, -0.5]) + 0.4 * rng.normal(size=n) > 0,
                1.0, -1.0,
            )
            if len(np.unique(targets)) < 2:
                targets[0] = -targets[0]
            C = float(rng.choice([0.1, 1.0, 10.0]))
            svm = classifier.train_svm(points, targets, C)
            ours = classifier.svm_objective(svm.weights, svm.bias, points, targets, C)
            oracle, _ = svm_grid_minimum(points, targets, C)
            assert ours <= oracle * (1 + 1e-3) + 1e-9

    def test_single_class_rejected(self):
        with pytest.raises(ValueError, match="degenerate"):
            classifier.train_svm(np.ones((3, 1)), np.ones(3), C=1.0)

    def test_translation_invariance_on_standardized_path(self):
        # Standardization absorbs any constant shift of the raw inputs, so
        # the trained boundary direction cannot move.
        rng = np.random.default_rng(7)
        points = rng.normal(size=(40, 3))
        targets = np.where(points[:, 0] > 0, 1.0, -1.0)
        shift = np.array([5.0, -2.0, 3.0])

        def standardized_fit(raw):
            feats = make_features(raw, targets)
            scaled, _, _, _ = features.standardize(feats, [])
            matrix = np.stack([f.values for f in scaled])
            return classifier.train_svm(matrix, targets, C=1.0)

        base = standardized_fit(points)
        moved = standardized_fit(points + shift)
        np.testing.assert_allclose(moved.weights, base.weights, atol=1e-6)
        assert moved.bias == pytest.approx(base.bias, abs=1e-6)


class TestMetrics:
    def test_confusion_hand_example(self):
        pred = np.array([1] * 10 + [-1] * 10)
        truth = np.array([1] * 8 + [-1] * 2 + [1] * 2 + [-1] * 8)
        out = classifier.metrics(pred, pred.astype(float), truth)
        assert out.precision_depressed == pytest.approx(0.8)
        assert out.recall_depressed == pytest.approx(0.8)
        assert out.f1_depressed == pytest.approx(0.8)
        assert out.weighted_f1 == pytest.approx(0.8)

    def test_auc_worked_example(self):
        scores = np.array([0.1, 0.4, 0.35, 0.8])
        truth = np.array([-1, -1, 1, 1])
        assert classifier.auc_score(scores, truth) == 0.75
        assert pairwise_auc(scores, truth) == 0.75

    def test_auc_perfect_separation(self):
        scores = np.array([-2.0, -1.0, 1.0, 2.0])
        truth = np.array([-1, -1, 1, 1])
        assert classifier.auc_score(scores, truth) == 1.0

    def test_auc_matches_pair_counting(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            n = int(rng.integers(4, 200))
            scores = rng.choice(
                np.round(rng.normal(size=10), 2), size=n
            )  # heavy ties
            truth = np.where(rng.uniform(size=n) < 0.5, 1, -1)
            if len(np.unique(truth)) < 2:
                truth[0] = -truth[0]
            assert classifier.auc_score(scores, truth) == pairwise_auc(scores, truth)

    def test_zero_division_defined_as_zero(self):
        pred = np.array([-1, -1])
        truth = np.array([1, -1])
        out = classifier.metrics(pred, np.array([0.0, 0.0]), truth)
        assert out.precision_depressed == 0.0
        assert out.recall_depressed == 0.0
        assert out.f1_depressed == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length"):
            classifier.metrics(np.array([1]), np.array([0.1, 0.2]), np.array([1, -1]))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_weighted_recall_is_accuracy(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 60))
        pred = np.where(rng.uniform(size=n) < 0.5, 1, -1)
        truth = np.where(rng.uniform(size=n) < 0.5, 1, -1)
        if len(np.unique(truth)) < 2:
            truth[0] = -truth[0]
        out = classifier.metrics(pred, rng.normal(size=n), truth)
        accuracy = float(np.mean(pred == truth))
        assert out.weighted_recall == pytest.approx(accuracy, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1))
    def test_weighted_f1_between_class_f1(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(4, 60))
        pred = np.where(rng.uniform(size=n) < 0.5, 1, -1)
        truth = np.where(rng.uniform(size=n) < 0.5, 1, -1)
        if len(np.unique(truth)) < 2:
            truth[0] = -truth[0]
        out = classifier.metrics(pred, rng.normal(size=n), truth)
        low = min(out.f1_depressed, out.f1_healthy) - 1e-12
        high = max(out.f1_depressed, out.f1_healthy) + 1e-12
        assert low <= out.weighted_f1 <= high


def make_features(values, labels):
    return [
        features.FeatureVector(
            user_id=f"u{i}", kind=features.KIND_MU,
            values=np.asarray(v, dtype=float),
            label=Label.DEPRESSED if y == 1 else Label.HEALTHY,
        )
        for i, (v, y) in enumerate(zip(values, labels))
    ]


class TestCrossValidate:
    def test_stratification_proportions(self):
        rng = np.random.default_rng(0)
        for n_pos, n_neg in [(100, 100), (37, 61), (20, 480)]:
            labels = np.array([1] * n_pos + [-1] * n_neg)
            folds = classifier.stratified_folds(labels, 5, seed=1)
            assert sorted(np.concatenate(folds).tolist()) == list(range(len(labels)))
            for fold in folds:
                got_pos = int(np.sum(labels[fold] == 1))
                got_neg = int(np.sum(labels[fold] == -1))
                assert abs(got_pos - n_pos / 5) <= 1
                assert abs(got_neg - n_neg / 5) <= 1

    def test_separable_data_perfect_score(self):
        rng = np.random.default_rng(2)
        pos = rng.normal(loc=4.0, size=(25, 2))
        neg = rng.normal(loc=-4.0, size=(25, 2))
        feats = make_features(
            np.vstack([pos, neg]), np.array([1] * 25 + [-1] * 25)
        )
        report = classifier.cross_validate(feats, C=1.0, folds=5, seed=0)
        for fold in report.per_fold:
            assert fold.weighted_f1 == 1.0
            assert fold.auc == 1.0

    def test_random_features_auc_near_half(self):
        rng = np.random.default_rng(3)
        values = rng.normal(size=(120, 3))
        labels = np.array([1] * 60 + [-1] * 60)
        report = classifier.cross_validate(
            make_features(values, labels), C=1.0, folds=5, seed=0
        )
        assert abs(report.mean["auc"] - 0.5) <= 0.15

    def test_too_few_per_class(self):
        feats = make_features(np.zeros((6, 1)), [1, 1, 1, 1, -1, -1])
        with pytest.raises(ValueError, match="folds"):
            classifier.cross_validate(feats, C=1.0, folds=5, seed=0)

    def test_report_aggregates(self):
        rng = np.random.default_rng(4)
        values = np.vstack([
            rng.normal(loc=1.0, size=(30, 2)), rng.normal(loc=-1.0, size=(30, 2)),
        ])
        labels = np.array([1] * 30 + [-1] * 30)
        report = classifier.cross_validate(
            make_features(values, labels), C=1.0, folds=5, seed=0
        )
        assert len(report.per_fold) == 5
        aucs = [s.auc for s in report.per_fold]
        assert report.mean["auc"] == pytest.approx(np.mean(aucs))
        assert report.std["auc"] == pytest.approx(np.std(aucs, ddof=1))
        for key, value in report.mean.items():
            assert 0.0 <= value <= 1.0, key
