import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from fedtwin.data import (
    DEFAULT_PROFILE,
    ConditionLabel,
    OperatingRegime,
    generate_dataset,
)
from fedtwin.errors import ContractError, DimensionError
from fedtwin.estimators import (
    BarlowTwinsEncoder,
    FederatedEncoder,
    LinearProbe,
    SupervisedEncoder,
    check_window_array,
)


@pytest.fixture(scope="module")
def small_dataset():
    return generate_dataset(
        DEFAULT_PROFILE,
        conditions={ConditionLabel.N, ConditionLabel.UR, ConditionLabel.PL},
        regimes={OperatingRegime.R3L},
        seconds=0.4,
        seed=3,
    )


class TestValidationHelper:
    def test_coerces_and_validates(self):
        X = check_window_array(np.zeros((2, 3, 256), dtype=np.float32) + 0.5)
        assert X.dtype == np.float64

    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionError):
            check_window_array(np.zeros((4, 256)))

    def test_rejects_wrong_channels(self):
        with pytest.raises(DimensionError):
            check_window_array(np.zeros((4, 2, 256)))

    def test_rejects_nonfinite(self):
        X = np.zeros((1, 3, 256))
        X[0, 0, 0] = np.nan
        with pytest.raises(ContractError):
            check_window_array(X)


class TestSklearnProtocol:
    @pytest.mark.parametrize(
        "estimator",
        [
            SupervisedEncoder(epochs=1),
            BarlowTwinsEncoder(epochs=1),
            FederatedEncoder(rounds=1),
            LinearProbe(epochs=1),
        ],
    )
    def test_get_params_set_params_clone(self, estimator):
        params = estimator.get_params()
        assert "random_state" in params
        rebuilt = clone(estimator)
        assert rebuilt.get_params() == params
        rebuilt.set_params(random_state=99)
        assert rebuilt.get_params()["random_state"] == 99

    def test_transform_before_fit_raises(self):
        with pytest.raises(NotFittedError):
            BarlowTwinsEncoder().transform(np.zeros((1, 3, 256)))
        with pytest.raises(NotFittedError):
            LinearProbe().predict(np.zeros((1, 8)))


class TestSupervisedEncoder(object):
    def test_fit_transform_predict(self, small_dataset):
        encoder = SupervisedEncoder(epochs=60, batch_size=32, random_state=0)
        encoder.fit(small_dataset.windows, small_dataset.labels)
        features = encoder.transform(small_dataset.windows)
        assert features.shape == (len(small_dataset), 64)
        predictions = encoder.predict(small_dataset.windows)
        assert predictions.shape == (len(small_dataset),)
        # training classes are codes in the global space
        assert set(np.unique(predictions)) <= set(range(encoder.n_classes_))
        assert encoder.score(small_dataset.windows, small_dataset.labels) > 0.5

    def test_deterministic_per_random_state(self, small_dataset):
        def fit_once():
            enc = SupervisedEncoder(epochs=3, random_state=7)
            enc.fit(small_dataset.windows, small_dataset.labels)
            return enc.state_.checksum()

        assert fit_once() == fit_once()

    def test_single_class_rejected(self, small_dataset):
        mask = small_dataset.labels == int(ConditionLabel.N)
        with pytest.raises(ContractError):
            SupervisedEncoder(epochs=1).fit(
                small_dataset.windows[mask], small_dataset.labels[mask]
            )


class TestBarlowTwinsEncoder:
    def test_fit_ignores_labels(self, small_dataset):
        encoder = BarlowTwinsEncoder(epochs=3, random_state=1)
        encoder.fit(small_dataset.windows)
        features = encoder.transform(small_dataset.windows[:10])
        assert features.shape == (10, 64)
        assert np.isfinite(features).all()

    def test_loss_history_recorded(self, small_dataset):
        encoder = BarlowTwinsEncoder(epochs=4, random_state=1)
        encoder.fit(small_dataset.windows)
        assert len(encoder.loss_history_) == 4
        assert all(np.isfinite(v) for v in encoder.loss_history_)


class TestFederatedEncoder:
    def test_fit_with_client_assignment(self, small_dataset):
        clients = (small_dataset.labels == int(ConditionLabel.PL)).astype(int)
        encoder = FederatedEncoder(
            method="supervised", rounds=2, local_batches=2, batch_size=32,
            random_state=0,
        )
        encoder.fit(small_dataset.windows, small_dataset.labels, clients=clients)
        assert len(encoder.round_records_) == 2
        features = encoder.transform(small_dataset.windows[:5])
        assert features.shape == (5, 64)

    def test_requires_clients(self, small_dataset):
        with pytest.raises(ContractError):
            FederatedEncoder(rounds=1).fit(small_dataset.windows)

    def test_supervised_requires_labels(self, small_dataset):
        with pytest.raises(ContractError):
            FederatedEncoder(method="supervised", rounds=1).fit(
                small_dataset.windows,
                clients=np.zeros(len(small_dataset), dtype=int),
            )


class TestLinearProbe:
    def test_fit_predict_score(self):
        rng = np.random.default_rng(0)
        X = np.concatenate([
            0.3 * rng.standard_normal((40, 5)) + [2, 0, 0, 0, 0],
            0.3 * rng.standard_normal((40, 5)) - [2, 0, 0, 0, 0],
        ])
        y = np.array([0] * 40 + [1] * 40)
        probe = LinearProbe(random_state=0).fit(X, y)
        assert probe.score(X, y) == 1.0
        proba = probe.predict_proba(X[:3])
        np.testing.assert_allclose(proba.sum(axis=1), 1.0, atol=1e-9)
