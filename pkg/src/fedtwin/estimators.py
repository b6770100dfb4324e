"""Scikit-learn compatible estimators over the training engine.

These wrap the supervised, self-supervised, and federated trainers plus
the linear probe in the standard fit/transform/predict surface so they
compose with pipelines, ``clone``, and grid tooling. Window inputs are
arrays shaped (n_samples, 3, window_length); features are (n_samples,
feature_dim).

Typical use::

    encoder = BarlowTwinsEncoder(epochs=150, random_state=0).fit(X_unlabeled)
    probe = LinearProbe(random_state=0).fit(encoder.transform(X_train), y_train)
    probe.score(encoder.transform(X_test), y_test)
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.exceptions import NotFittedError

from .augment import AugmentConfig
from .errors import ContractError, DimensionError
from .evaluation import extract_features, probe_probabilities
from .federation import make_clients, run_federation
from .models import barlow_config, init_weights, supervised_config
from .optim import Adam
from .training import train_barlow_epochs, train_supervised_epochs


def check_window_array(X, in_channels: int = 3) -> np.ndarray:
    """Validate and coerce a window batch to float64 (N, C, L)."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3:
        raise DimensionError(f"expected (n_samples, channels, length), got {X.shape}")
    if X.shape[0] == 0:
        raise ContractError("empty window batch")
    if X.shape[1] != in_channels:
        raise DimensionError(f"expected {in_channels} channels, got {X.shape[1]}")
    if not np.all(np.isfinite(X)):
        raise ContractError("window batch contains non-finite values")
    return X


def _check_labels(y, n_samples: int) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1 or len(y) != n_samples:
        raise DimensionError(f"labels must be shape ({n_samples},), got {y.shape}")
    return y.astype(np.int64)


def _rng(seed, *salt):
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), *salt]))
    )


class SupervisedEncoder(TransformerMixin, ClassifierMixin, BaseEstimator):
    """Backbone + softmax classifier trained with cross-entropy.

    ``transform`` returns frozen backbone features; ``predict`` uses the
    trained head.
    """

    def __init__(
        self,
        epochs: int = 150,
        learning_rate: float = 5e-4,
        batch_size: int = 128,
        random_state: int = 0,
    ):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        X = check_window_array(X)
        y = _check_labels(y, len(X))
        if y.min() < 0:
            raise ContractError("labels must be nonnegative integer codes")
        self.classes_ = np.unique(y)
        if len(self.classes_) < 2:
            raise ContractError("supervised training needs at least 2 classes")
        # labels are codes in a global space; the head spans every code so
        # encoders trained on different subsets stay architecture-aligned
        self.n_classes_ = max(int(y.max()) + 1, 2)
        self.config_ = supervised_config(self.n_classes_)
        self.state_ = init_weights(self.config_, self.random_state)
        self.loss_history_ = train_supervised_epochs(
            self.state_,
            X,
            y,
            self.n_classes_,
            epochs=self.epochs,
            optimizer=Adam(lr=self.learning_rate),
            batch_size=self.batch_size,
            rng=_rng(self.random_state, 0x5E),
            config=self.config_,
        )
        return self

    def transform(self, X) -> np.ndarray:
        self._check_fitted()
        return extract_features(self.state_, check_window_array(X), config=self.config_)

    def predict_proba(self, X) -> np.ndarray:
        from .models import classifier_forward

        self._check_fitted()
        return classifier_forward(self.state_, self.transform(X)).data

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)

    def _check_fitted(self):
        if not hasattr(self, "state_"):
            raise NotFittedError("fit must be called first")


class BarlowTwinsEncoder(TransformerMixin, BaseEstimator):
    """Self-supervised backbone + projection head; labels are ignored.

    ``trade_off`` weights the redundancy-reduction term of the loss;
    ``min_scale`` and ``mask_size`` parameterize the augmentations.
    """

    def __init__(
        self,
        epochs: int = 150,
        learning_rate: float = 5e-4,
        batch_size: int = 128,
        trade_off: float = 0.01,
        min_scale: float = 0.1,
        mask_size: int = 64,
        loss_variant: str = "canonical",
        random_state: int = 0,
    ):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.trade_off = trade_off
        self.min_scale = min_scale
        self.mask_size = mask_size
        self.loss_variant = loss_variant
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_window_array(X)
        self.config_ = barlow_config()
        self.state_ = init_weights(self.config_, self.random_state)
        self.loss_history_ = train_barlow_epochs(
            self.state_,
            X,
            epochs=self.epochs,
            optimizer=Adam(lr=self.learning_rate),
            batch_size=self.batch_size,
            rng=_rng(self.random_state, 0xB7),
            lam=self.trade_off,
            aug=AugmentConfig(min_scale=self.min_scale, mask_size=self.mask_size),
            variant=self.loss_variant,
            config=self.config_,
        )
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "state_"):
            raise NotFittedError("fit must be called first")
        return extract_features(self.state_, check_window_array(X), config=self.config_)


class FederatedEncoder(TransformerMixin, BaseEstimator):
    """FedAvg-trained encoder; window-to-client assignment comes in via
    the ``clients`` fit parameter (an integer array aligned with X).

    ``method`` picks the client objective: "supervised" (y required) or
    "barlow_twins" (y ignored).
    """

    def __init__(
        self,
        method: str = "barlow_twins",
        rounds: int = 150,
        local_batches: int = 20,
        batch_size: int = 128,
        learning_rate: float = 2e-4,
        trade_off: float = 0.01,
        n_classes: int = 8,
        random_state: int = 0,
    ):
        self.method = method
        self.rounds = rounds
        self.local_batches = local_batches
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.trade_off = trade_off
        self.n_classes = n_classes
        self.random_state = random_state

    def fit(self, X, y=None, clients=None):
        X = check_window_array(X)
        if clients is None:
            raise ContractError("FederatedEncoder.fit requires a clients= assignment array")
        clients = _check_labels(clients, len(X))
        if self.method == "supervised":
            if y is None:
                raise ContractError("supervised federation requires labels")
            y = _check_labels(y, len(X))
        else:
            y = np.zeros(len(X), dtype=np.int64)
        if self.method == "supervised":
            self.config_ = supervised_config(self.n_classes)
        elif self.method == "barlow_twins":
            self.config_ = barlow_config()
        else:
            raise ContractError(f"unknown federation method {self.method!r}")

        datasets = []
        for client_id in np.unique(clients):
            mask = clients == client_id
            datasets.append(_RawClientData(X[mask], y[mask]))
        handles = make_clients(datasets, lr=self.learning_rate, seed=self.random_state)
        self.state_, self.round_records_ = run_federation(
            handles,
            rounds=self.rounds,
            method=self.method,
            model_config=self.config_,
            seed=self.random_state,
            local_batches=self.local_batches,
            batch_size=self.batch_size,
            n_classes=self.n_classes,
            lam=self.trade_off,
        )
        return self

    def transform(self, X) -> np.ndarray:
        if not hasattr(self, "state_"):
            raise NotFittedError("fit must be called first")
        return extract_features(self.state_, check_window_array(X), config=self.config_)


class _RawClientData:
    """Duck-typed stand-in for WindowDataset inside federation."""

    def __init__(self, windows, labels):
        self.windows = windows
        self.labels = labels

    def __len__(self):
        return len(self.windows)


class LinearProbe(ClassifierMixin, BaseEstimator):
    """Linear+softmax classifier over frozen features (the evaluation
    yardstick: fit on labeled features, score on held-out ones)."""

    def __init__(
        self,
        epochs: int = 75,
        learning_rate: float = 1e-3,
        batch_size: int = 128,
        random_state: int = 0,
    ):
        self.epochs = epochs
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y):
        from .evaluation import train_linear_probe

        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise DimensionError(f"features must be 2-D, got {X.shape}")
        y = _check_labels(y, len(X))
        self.classes_ = np.unique(y)
        self.n_classes_ = int(y.max()) + 1
        self.state_ = train_linear_probe(
            X,
            y,
            self.n_classes_,
            epochs=self.epochs,
            lr=self.learning_rate,
            batch_size=self.batch_size,
            seed=self.random_state,
        )
        return self

    def predict_proba(self, X) -> np.ndarray:
        if not hasattr(self, "state_"):
            raise NotFittedError("fit must be called first")
        return probe_probabilities(self.state_, np.asarray(X, dtype=np.float64))

    def predict(self, X) -> np.ndarray:
        return self.predict_proba(X).argmax(axis=1)
