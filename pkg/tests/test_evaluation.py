import json

import numpy as np
import pytest

from fedtwin.data import DEFAULT_PROFILE, OperatingRegime, generate_dataset
from fedtwin.errors import ContractError
from fedtwin.evaluation import (
    ConfusionMatrix,
    confusion_from_predictions,
    evaluate_probe,
    extract_features,
    save_confusion_csv,
    save_metrics_json,
    train_linear_probe,
)
from fedtwin.models import BackboneConfig, ModelConfig, init_weights

SMALL = ModelConfig(
    backbone=BackboneConfig(in_channels=3, conv_blocks=((6, 7, 4), (8, 3, 4)), feature_dim=8),
)


class TestExtractFeatures:
    def test_shape_and_determinism(self):
        state = init_weights(ModelConfig(), seed=0)
        windows = np.random.default_rng(0).uniform(-1, 1, (10, 3, 256))
        f1 = extract_features(state, windows)
        f2 = extract_features(state, windows, batch_size=3)
        assert f1.shape == (10, 64)  # default feature width
        np.testing.assert_array_equal(f1, f2)

    def test_backbone_untouched(self):
        state = init_weights(SMALL, seed=1)
        before = state.checksum()
        windows = np.random.default_rng(1).uniform(-1, 1, (8, 3, 256))
        extract_features(state, windows, config=SMALL)
        assert state.checksum() == before
        assert all(e.tensor.grad is None for e in state.entries)

    def test_repeated_windows_repeated_rows(self):
        state = init_weights(SMALL, seed=2)
        row = np.random.default_rng(2).uniform(-1, 1, (1, 3, 256))
        features = extract_features(state, np.repeat(row, 4, axis=0), config=SMALL)
        for i in range(1, 4):
            np.testing.assert_array_equal(features[0], features[i])


class TestLinearProbe:
    def test_separable_two_class_reaches_perfect_train_accuracy(self):
        rng = np.random.default_rng(3)
        a = 0.5 * rng.standard_normal((60, 6)) + np.array([3.0, 0, 0, 0, 0, 0])
        b = 0.5 * rng.standard_normal((60, 6)) - np.array([3.0, 0, 0, 0, 0, 0])
        features = np.concatenate([a, b])
        labels = np.array([0] * 60 + [1] * 60)
        probe = train_linear_probe(features, labels, n_classes=2, epochs=75, seed=0)
        accuracy, _ = evaluate_probe(probe, features, labels, n_classes=2)
        assert accuracy == 1.0

    def test_same_seed_identical_probe(self):
        rng = np.random.default_rng(4)
        features = rng.standard_normal((50, 5))
        labels = rng.integers(0, 3, 50)
        p1 = train_linear_probe(features, labels, n_classes=3, epochs=10, seed=7)
        p2 = train_linear_probe(features, labels, n_classes=3, epochs=10, seed=7)
        assert p1.checksum() == p2.checksum()

    def test_random_backbone_beats_chance_on_synthetic(self):
        dataset = generate_dataset(DEFAULT_PROFILE, regimes={OperatingRegime.R3L},
                                   seconds=0.4, seed=5)
        state = init_weights(ModelConfig(), seed=11)
        features = extract_features(state, dataset)
        probe = train_linear_probe(features, dataset.labels, n_classes=8,
                                   epochs=40, seed=1)
        accuracy, _ = evaluate_probe(probe, features, dataset.labels)
        assert accuracy > 0.125

    def test_single_class_rejected(self):
        with pytest.raises(ContractError):
            train_linear_probe(np.ones((10, 3)), np.zeros(10), n_classes=2)


class TestEvaluate:
    def test_all_correct(self):
        rng = np.random.default_rng(6)
        features = rng.standard_normal((30, 4)) + 8 * np.eye(4)[rng.integers(0, 4, 30)]
        labels = features.argmax(axis=1)
        probe = train_linear_probe(features, labels, n_classes=4, epochs=75, seed=0)
        accuracy, matrix = evaluate_probe(probe, features, labels, n_classes=4)
        assert accuracy == 1.0
        assert np.trace(matrix.counts) == 30
        assert (matrix.counts - np.diag(np.diag(matrix.counts)) == 0).all()

    def test_constant_predictor_on_balanced_set(self):
        counts = np.zeros((8, 8), dtype=int)
        counts[:, 0] = 10  # every class predicted as class 0
        matrix = ConfusionMatrix(counts)
        assert matrix.accuracy() == 0.125

    def test_accuracy_equals_trace_over_total(self):
        rng = np.random.default_rng(7)
        y_true = rng.integers(0, 8, 500)
        y_pred = rng.integers(0, 8, 500)
        matrix = confusion_from_predictions(y_true, y_pred, 8)
        assert matrix.accuracy() == np.trace(matrix.counts) / 500
        assert matrix.total == 500

    def test_per_class_recall_row_normalized(self):
        counts = np.array([[8, 2], [5, 15]])
        matrix = ConfusionMatrix(counts)
        np.testing.assert_allclose(matrix.per_class_recall(), [0.8, 0.75])

    def test_empty_evaluation_rejected(self):
        probe = train_linear_probe(
            np.random.default_rng(0).standard_normal((20, 3)),
            np.array([0, 1] * 10), n_classes=2, epochs=2,
        )
        with pytest.raises(ContractError):
            evaluate_probe(probe, np.empty((0, 3)), np.empty(0), n_classes=2)


class TestArtifacts:
    def test_confusion_csv(self, tmp_path):
        matrix = confusion_from_predictions([0, 1, 2, 2], [0, 1, 2, 0], 8)
        path = tmp_path / "confusion.csv"
        save_confusion_csv(matrix, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("counts,N,FB,BoR")
        assert len(lines) == 2 * (8 + 1)

    def test_metrics_json(self, tmp_path):
        matrix = confusion_from_predictions([0, 1], [0, 1], 8)
        path = tmp_path / "metrics.json"
        save_metrics_json(
            path, method="barlow_source", seed=3, condition_set="N+PL",
            accuracy=1.0, matrix=matrix,
        )
        payload = json.loads(path.read_text())
        assert payload["method"] == "barlow_source"
        assert payload["accuracy"] == 1.0
        assert len(payload["per_class_recall"]) == 8
