"""Training objectives: cross-entropy and the Barlow Twins loss.

The Barlow Twins pipeline takes two independently augmented views of a
batch, projects both, standardizes each projection dimension across the
batch (mean 0, population variance 1), forms the feature-by-feature
cross-correlation matrix R = Zhat1^T Zhat2 / B, and penalizes R's
distance from the identity.

Two variants of the final penalty are provided:

* ``canonical`` (default): sum_i (1 - R_ii)^2 + lam * sum_{i!=j} R_ij^2.
  This is the standard formulation; it is bounded below and is zero
  exactly at R = I.
* ``literal``: tr((R - I)^2) + lam * sum_{i!=j} R_ij with the first term
  a matrix square and the off-diagonal term unsquared. Kept only for
  comparison; it is unbounded below (off-diagonals can be negative), so
  it is not a sensible minimization target.
"""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .augment import DEFAULT_AUGMENT, AugmentConfig, randomly_augment
from .errors import ContractError, DegenerateBatchError, DimensionError
from .models import ModelState, backbone_forward, classifier_forward, projector_forward
from .tensor import Tensor

PROB_FLOOR = 1e-12
VARIANCE_FLOOR = 1e-12
LOSS_VARIANTS = ("canonical", "literal")


def one_hot(labels, n_classes: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.ndim != 1:
        raise DimensionError(f"labels must be 1-D, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ContractError(
            f"labels must lie in [0, {n_classes}), got range "
            f"[{labels.min()}, {labels.max()}]"
        )
    out = np.zeros((labels.size, n_classes), dtype=np.float64)
    out[np.arange(labels.size), labels.astype(np.int64)] = 1.0
    return out


def _check_one_hot(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.float64)
    if labels.ndim != 2:
        raise ContractError(f"one-hot labels must be (B, K), got {labels.shape}")
    if not np.isin(labels, (0.0, 1.0)).all() or not (labels.sum(axis=1) == 1.0).all():
        raise ContractError("each label row must contain exactly one 1")
    return labels


def cross_entropy(probs: Tensor, labels: np.ndarray) -> Tensor:
    """Mean negative log-probability of the true class.

    ``probs`` rows must lie on the simplex (the classifier head ensures
    this); probabilities are floored at 1e-12 before the log so a
    confidently wrong prediction yields a large finite loss.
    """
    probs = probs if isinstance(probs, Tensor) else Tensor(probs)
    labels = _check_one_hot(labels)
    if probs.shape != labels.shape:
        raise DimensionError(f"probs {probs.shape} vs labels {labels.shape}")
    batch = probs.shape[0]
    picked = T.mul(T.log(T.clip_min(probs, PROB_FLOOR)), Tensor(labels))
    return T.scale(T.reduce_sum(picked), -1.0 / batch)


def normalize_projections(z: Tensor) -> Tensor:
    """Standardize each projection dimension across the batch: mean 0,
    population variance 1 (divide by n, not n-1)."""
    z = z if isinstance(z, Tensor) else Tensor(z)
    if z.ndim != 2:
        raise DimensionError(f"projections must be (B, P), got {z.shape}")
    batch, width = z.shape
    if batch < 2:
        raise ContractError(f"batch normalization needs B >= 2, got {batch}")
    mean = T.reduce_mean(z, axis=0).reshape((1, width)).broadcast_to((batch, width))
    centered = z - mean
    variance = T.reduce_mean(T.square(centered), axis=0)
    if np.any(variance.data <= VARIANCE_FLOOR):
        dead = int(np.argmin(variance.data))
        raise DegenerateBatchError(
            f"projection dimension {dead} has variance "
            f"{variance.data[dead]:.3e} <= {VARIANCE_FLOOR}; refusing to normalize"
        )
    sigma = T.sqrt(variance).reshape((1, width)).broadcast_to((batch, width))
    return centered / sigma


def cross_correlation(zhat1: Tensor, zhat2: Tensor) -> Tensor:
    """Feature-by-feature correlation of two normalized projection
    batches: R = Zhat1^T Zhat2 / B, shape (P, P)."""
    zhat1 = zhat1 if isinstance(zhat1, Tensor) else Tensor(zhat1)
    zhat2 = zhat2 if isinstance(zhat2, Tensor) else Tensor(zhat2)
    if zhat1.ndim != 2 or zhat1.shape != zhat2.shape:
        raise DimensionError(f"view shapes differ: {zhat1.shape} vs {zhat2.shape}")
    batch = zhat1.shape[0]
    return T.scale(T.matmul(T.transpose(zhat1), zhat2), 1.0 / batch)


def barlow_twins_loss(r: Tensor, lam: float, variant: str = "canonical") -> Tensor:
    """Penalty for the cross-correlation matrix's distance from identity.

    ``lam`` trades the redundancy-reduction (off-diagonal) term against
    the invariance (diagonal) term.
    """
    r = r if isinstance(r, Tensor) else Tensor(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DimensionError(f"correlation matrix must be square, got {r.shape}")
    if variant not in LOSS_VARIANTS:
        raise ContractError(f"unknown loss variant {variant!r}")
    width = r.shape[0]
    eye = Tensor(np.eye(width))
    off_mask = Tensor(1.0 - np.eye(width))
    if variant == "canonical":
        diag_term = T.reduce_sum(T.square(T.mul(r - eye, eye)))
        off_term = T.reduce_sum(T.square(T.mul(r, off_mask)))
        return diag_term + T.scale(off_term, float(lam))
    deviation = r - eye
    diag_term = T.trace(T.matmul(deviation, deviation))
    off_term = T.reduce_sum(T.mul(r, off_mask))
    return diag_term + T.scale(off_term, float(lam))


def barlow_twins_step_loss(
    state: ModelState,
    x: np.ndarray,
    rng: np.random.Generator,
    lam: float,
    aug: AugmentConfig = DEFAULT_AUGMENT,
    variant: str = "canonical",
    config=None,
) -> Tensor:
    """Full self-supervised objective for one batch: augment twice with
    independent draws, project both views, normalize, correlate, and
    penalize. Differentiable end to end in the model parameters."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"expected a (B, C, L) batch, got {x.shape}")
    batch = x.shape[0]
    if batch < 2:
        raise ContractError(f"self-supervised step needs batch >= 2, got {batch}")
    view1 = randomly_augment(x, rng, aug)
    view2 = randomly_augment(x, rng, aug)
    # one joint pass over both views; the network is pointwise in the
    # batch axis, so this equals two separate passes
    stacked = np.concatenate([view1, view2])
    z = projector_forward(state, backbone_forward(state, stacked, config))
    z1 = T.slice_rows(z, 0, batch)
    z2 = T.slice_rows(z, batch, 2 * batch)
    r = cross_correlation(normalize_projections(z1), normalize_projections(z2))
    return barlow_twins_loss(r, lam, variant)


def supervised_step_loss(
    state: ModelState, x: np.ndarray, labels, n_classes: int, config=None
) -> Tensor:
    """Cross-entropy of the classifier on one labeled batch."""
    probs = classifier_forward(state, backbone_forward(state, x, config))
    return cross_entropy(probs, one_hot(labels, n_classes))
