"""Shared training loops over the autodiff engine.

Two sampling regimes are used by the experiments and must not be mixed
up: epoch training (shuffled full passes over a dataset, used for the
transfer-learning pretraining and the linear probe) and counted-batch
training (minibatches sampled uniformly with replacement, used inside
federation rounds and for the budget-matched local baselines).

A degenerate batch (zero-variance projection dimension in the
self-supervised loss) is treated as a failed step: the optimizer is not
stepped and training continues. Federation handles failures with its
own round-abort policy.
"""

from __future__ import annotations

import numpy as np

from .augment import DEFAULT_AUGMENT, AugmentConfig
from .errors import DegenerateBatchError
from .losses import barlow_twins_step_loss, supervised_step_loss
from .models import ModelState
from .optim import Adam
from .tensor import Tape


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    """Shuffled partition of range(n) into batches; the final partial
    batch is kept."""
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def train_supervised_epochs(
    state: ModelState,
    windows: np.ndarray,
    labels: np.ndarray,
    n_classes: int,
    *,
    epochs: int,
    optimizer: Adam,
    batch_size: int,
    rng: np.random.Generator,
    config=None,
    step_loss=supervised_step_loss,
) -> list[float]:
    """Cross-entropy training, one shuffled full pass per epoch.

    ``step_loss(state, x, y, n_classes, config)`` defaults to the full
    backbone+classifier objective; the linear probe passes a
    classifier-only loss over precomputed features. Returns mean loss
    per epoch."""
    history = []
    for _epoch in range(epochs):
        losses = []
        for idx in epoch_batches(len(windows), batch_size, rng):
            with Tape() as tape:
                loss = step_loss(state, windows[idx], labels[idx], n_classes, config)
            tape.backward(loss)
            optimizer.step(state)
            state.zero_grads()
            losses.append(loss.item())
        history.append(float(np.mean(losses)))
    return history


def train_barlow_epochs(
    state: ModelState,
    windows: np.ndarray,
    *,
    epochs: int,
    optimizer: Adam,
    batch_size: int,
    rng: np.random.Generator,
    lam: float,
    aug: AugmentConfig = DEFAULT_AUGMENT,
    variant: str = "canonical",
    config=None,
) -> list[float]:
    """Barlow Twins training, one shuffled full pass per epoch. Batches
    smaller than 2 cannot be normalized and are skipped."""
    history = []
    for _epoch in range(epochs):
        losses = []
        for idx in epoch_batches(len(windows), batch_size, rng):
            if len(idx) < 2:
                continue
            try:
                with Tape() as tape:
                    loss = barlow_twins_step_loss(
                        state, windows[idx], rng, lam, aug, variant, config
                    )
            except DegenerateBatchError:
                state.zero_grads()
                continue
            tape.backward(loss)
            optimizer.step(state)
            state.zero_grads()
            losses.append(loss.item())
        history.append(float(np.mean(losses)) if losses else float("nan"))
    return history


def run_sampled_batches(
    state: ModelState,
    windows: np.ndarray,
    labels,
    *,
    method: str,
    n_batches: int,
    batch_size: int,
    optimizer: Adam,
    rng: np.random.Generator,
    n_classes: int = 8,
    lam: float = 0.01,
    aug: AugmentConfig = DEFAULT_AUGMENT,
    variant: str = "canonical",
    config=None,
) -> float:
    """``n_batches`` optimizer steps on minibatches drawn uniformly with
    replacement. Returns the mean loss; raises DegenerateBatchError
    through to the caller (federation aborts the client's round)."""
    losses = []
    for _ in range(n_batches):
        idx = rng.integers(0, len(windows), size=batch_size)
        with Tape() as tape:
            if method == "supervised":
                loss = supervised_step_loss(state, windows[idx], labels[idx], n_classes, config)
            elif method == "barlow_twins":
                loss = barlow_twins_step_loss(
                    state, windows[idx], rng, lam, aug, variant, config
                )
            else:
                raise ValueError(f"unknown training method {method!r}")
        tape.backward(loss)
        optimizer.step(state)
        state.zero_grads()
        losses.append(loss.item())
    return float(np.mean(losses)) if losses else float("nan")
