"""Self-supervised and federated training of 1D-CNN feature extractors
for multichannel condition-monitoring windows, evaluated with frozen-
feature linear probes."""

__version__ = "0.1.0"

from .augment import AugmentConfig, jitter, random_mask, random_scale, randomly_augment
from .data import (
    ConditionLabel,
    DEFAULT_PROFILE,
    OperatingRegime,
    SyntheticProfile,
    WindowDataset,
    generate_dataset,
    generate_synthetic,
    load_dataset,
    save_dataset,
)
from .estimators import (
    BarlowTwinsEncoder,
    FederatedEncoder,
    LinearProbe,
    SupervisedEncoder,
)
from .evaluation import ConfusionMatrix, evaluate_probe, extract_features, train_linear_probe
from .federation import federated_average, make_clients, run_federation
from .losses import barlow_twins_loss, cross_correlation, cross_entropy, normalize_projections
from .models import (
    BackboneConfig,
    ModelConfig,
    ModelState,
    backbone_forward,
    classifier_forward,
    init_weights,
    load_state,
    projector_forward,
    save_state,
)
from .optim import SGD, Adam
from .tensor import Tape, Tensor

__all__ = [
    "AugmentConfig", "jitter", "random_mask", "random_scale", "randomly_augment",
    "ConditionLabel", "DEFAULT_PROFILE", "OperatingRegime", "SyntheticProfile",
    "WindowDataset", "generate_dataset", "generate_synthetic", "load_dataset",
    "save_dataset",
    "BarlowTwinsEncoder", "FederatedEncoder", "LinearProbe", "SupervisedEncoder",
    "ConfusionMatrix", "evaluate_probe", "extract_features", "train_linear_probe",
    "federated_average", "make_clients", "run_federation",
    "barlow_twins_loss", "cross_correlation", "cross_entropy", "normalize_projections",
    "BackboneConfig", "ModelConfig", "ModelState", "backbone_forward",
    "classifier_forward", "init_weights", "load_state", "projector_forward",
    "save_state",
    "SGD", "Adam", "Tape", "Tensor",
    "__version__",
]
