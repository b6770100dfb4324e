"""Frozen-feature linear-probe evaluation.

Representation quality is judged by training only a linear+softmax
classifier on features extracted by a frozen backbone, then measuring
test accuracy. The probe is privileged: it sees labels for every
condition, including ones the backbone never trained on, which is
exactly what makes it a generality yardstick rather than a deployable
classifier.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from .data import ConditionLabel, WindowDataset
from .errors import ContractError
from .models import ModelState, backbone_forward, classifier_forward
from .optim import Adam
from .training import train_supervised_epochs


@dataclass
class ConfusionMatrix:
    """Rows are true classes (condition code order), columns predicted."""

    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if self.counts.ndim != 2 or self.counts.shape[0] != self.counts.shape[1]:
            raise ContractError(f"confusion matrix must be square, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise ContractError("confusion counts must be nonnegative")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def accuracy(self) -> float:
        return float(np.trace(self.counts) / self.counts.sum())

    def per_class_recall(self) -> np.ndarray:
        """Row-normalized diagonal; classes with no examples score 0."""
        row_sums = self.counts.sum(axis=1)
        recall = np.zeros(self.counts.shape[0])
        present = row_sums > 0
        recall[present] = np.diag(self.counts)[present] / row_sums[present]
        return recall


def confusion_from_predictions(y_true, y_pred, n_classes: int) -> ConfusionMatrix:
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ContractError("true and predicted labels must be equal-length vectors")
    counts = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(counts, (y_true, y_pred), 1)
    return ConfusionMatrix(counts)


def extract_features(
    state: ModelState, data, batch_size: int = 256, config=None
) -> np.ndarray:
    """Forward pass only; the backbone is never touched (no tape, no
    gradients). Accepts a WindowDataset or a raw (N, C, L) array."""
    windows = data.windows if isinstance(data, WindowDataset) else np.asarray(data)
    blocks = []
    for start in range(0, len(windows), batch_size):
        features = backbone_forward(state, windows[start : start + batch_size], config)
        blocks.append(features.data)
    return np.concatenate(blocks) if blocks else np.empty((0, 0))


def train_linear_probe(
    features: np.ndarray,
    labels,
    n_classes: int = 8,
    *,
    epochs: int = 75,
    lr: float = 1e-3,
    batch_size: int = 128,
    seed: int = 0,
) -> ModelState:
    """Linear+softmax classifier fit on frozen features with Adam."""
    from .models import init_linear_classifier

    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if features.ndim != 2 or len(features) != len(labels):
        raise ContractError(
            f"features {features.shape} and labels {labels.shape} disagree"
        )
    if len(np.unique(labels)) < 2:
        raise ContractError("probe training needs at least 2 distinct labels")
    probe = init_linear_classifier(features.shape[1], n_classes, seed, zero_init=True)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x9806E])))
    train_supervised_epochs(
        probe,
        features,
        labels,
        n_classes,
        epochs=epochs,
        optimizer=Adam(lr=lr),
        batch_size=batch_size,
        rng=rng,
        step_loss=_probe_step_loss,
    )
    return probe


def _probe_step_loss(state, features, labels, n_classes, _config):
    from .losses import cross_entropy, one_hot

    return cross_entropy(classifier_forward(state, features), one_hot(labels, n_classes))


def probe_probabilities(probe: ModelState, features: np.ndarray) -> np.ndarray:
    return classifier_forward(probe, np.asarray(features, dtype=np.float64)).data


def evaluate_probe(
    probe: ModelState, features: np.ndarray, labels, n_classes: int = 8
) -> tuple[float, ConfusionMatrix]:
    """Accuracy = trace(counts) / total over the given evaluation set."""
    labels = np.asarray(labels, dtype=np.int64)
    if len(labels) == 0:
        raise ContractError("cannot evaluate on an empty set")
    probs = probe_probabilities(probe, features)
    predictions = probs.argmax(axis=1)
    matrix = confusion_from_predictions(labels, predictions, n_classes)
    return matrix.accuracy(), matrix


def save_confusion_csv(matrix: ConfusionMatrix, path, class_names=None) -> None:
    """Counts block followed by row-normalized percentages."""
    names = class_names or [c.name for c in ConditionLabel][: matrix.counts.shape[0]]
    recall = matrix.counts / np.maximum(matrix.counts.sum(axis=1, keepdims=True), 1)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["counts"] + list(names))
        for name, row in zip(names, matrix.counts):
            writer.writerow([name] + [int(v) for v in row])
        writer.writerow(["row_percent"] + list(names))
        for name, row in zip(names, recall):
            writer.writerow([name] + [f"{100.0 * v:.2f}" for v in row])


def save_metrics_json(path, *, method, seed, condition_set, accuracy, matrix: ConfusionMatrix) -> None:
    payload = {
        "method": method,
        "seed": int(seed),
        "condition_set": condition_set,
        "accuracy": float(accuracy),
        "per_class_recall": [float(v) for v in matrix.per_class_recall()],
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
