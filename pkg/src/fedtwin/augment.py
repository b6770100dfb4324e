"""Random augmentations for window batches: jitter, scale, mask.

The composition mirrors the training recipe exactly: one circular time
jitter drawn per batch, an independent scale factor per example, and one
zeroed mask region per batch, applied in that order. The draw asymmetry
(batch-wide jitter and mask, per-example scale) is deliberate and
preserved.

All functions are pure in (input, rng state) and operate on plain numpy
arrays shaped (B, C, L); augmentation happens before the network, so
nothing here participates in gradients. RNG state is always an explicit
seedable generator (counter-based Philox recommended), never global.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DimensionError, NumericDomainError


@dataclass(frozen=True)
class AugmentConfig:
    min_scale: float = 0.1
    mask_size: int = 64

    def __post_init__(self):
        if not 0.0 < self.min_scale <= 1.0:
            raise ContractError(f"min_scale must be in (0, 1], got {self.min_scale}")
        if self.mask_size < 1:
            raise ContractError(f"mask_size must be positive, got {self.mask_size}")


DEFAULT_AUGMENT = AugmentConfig()


def _check_batch(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3:
        raise DimensionError(f"expected a (B, C, L) batch, got shape {x.shape}")
    return x


def jitter(x: np.ndarray, j: int) -> np.ndarray:
    """Circular left-rotation of the time axis by ``j`` samples, the same
    ``j`` for the whole batch: out[..., t] = in[..., (t + j) mod L]."""
    x = _check_batch(x)
    length = x.shape[-1]
    j = int(j)
    if not 0 <= j < length:
        raise ContractError(f"jitter offset {j} outside [0, {length})")
    return np.concatenate((x[..., j:], x[..., :j]), axis=-1)


def random_scale(x: np.ndarray, u: np.ndarray, min_scale: float = 0.1) -> np.ndarray:
    """Per-example rescaling by s_b = u_b * (1/max_b|x| - min_scale) + min_scale.

    The max is taken over each example's flattened channels and time, so
    u near 1 pushes the example's peak toward 1 and u = 0 gives exactly
    min_scale. Sign pattern and zero positions are preserved.
    """
    x = _check_batch(x)
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (x.shape[0],):
        raise DimensionError(f"need one uniform per example, got {u.shape}")
    if np.any((u < 0.0) | (u >= 1.0)):
        raise ContractError("scale uniforms must lie in [0, 1)")
    vmax = np.abs(x).reshape(x.shape[0], -1).max(axis=1)
    if np.any(vmax == 0.0):
        raise NumericDomainError("random_scale: all-zero example has no scale")
    scales = u * (1.0 / vmax - min_scale) + min_scale
    return x * scales[:, None, None]


def random_mask(x: np.ndarray, start: int, mask_size: int = 64) -> np.ndarray:
    """Zero out samples [start, start + mask_size) on every example and
    channel; one start for the whole batch."""
    x = _check_batch(x)
    length = x.shape[-1]
    if not 1 <= mask_size < length:
        raise ContractError(f"mask_size {mask_size} must be in [1, {length})")
    start = int(start)
    if not 0 <= start <= length - mask_size:
        raise ContractError(
            f"mask start {start} outside [0, {length - mask_size}]"
        )
    out = x.copy()
    out[..., start : start + mask_size] = 0.0
    return out


def randomly_augment(
    x: np.ndarray, rng: np.random.Generator, config: AugmentConfig = DEFAULT_AUGMENT
) -> np.ndarray:
    """Jitter, then scale, then mask, with fresh draws from ``rng``.

    Draw order is part of the contract: one integer in [0, L) for the
    jitter, B uniforms in [0, 1) for the scales, one integer in
    [0, L - mask_size) for the mask start. Calls with equal rng state are
    bit-identical; each call advances the state.
    """
    x = _check_batch(x)
    length = x.shape[-1]
    if config.mask_size >= length:
        raise ContractError(
            f"mask_size {config.mask_size} must be smaller than window length {length}"
        )
    j = int(rng.integers(length))
    out = jitter(x, j)
    out = random_scale(out, rng.random(x.shape[0]), min_scale=config.min_scale)
    start = int(rng.integers(length - config.mask_size))
    return random_mask(out, start, mask_size=config.mask_size)
