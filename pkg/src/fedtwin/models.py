"""Model definitions: 1D-CNN backbone, softmax classifier head, and
projection head, plus parameter-state handling and weight files.

A network is a :class:`ModelState`, an ordered list of named tensors.
Forward functions are free functions over a state; nothing here holds
hidden mutable state, which keeps federated averaging and concurrent
clients simple (clone a state to send it anywhere).

Default architecture (the source material fixes only the input format,
3 channels x 256 samples, not layer sizes): three conv blocks
(16,k7,s2) / (32,k5,s2) / (64,k3,s2), each with 'same'-style padding
k//2 and relu, then global average pooling over time into 64 features.
The classifier is a single linear layer with softmax; the projector is
linear 64->128, relu, linear 128->128 (projections deliberately wider
than the features they guard).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from . import _binio
from . import tensor as T
from .errors import ContractError, DimensionError, FormatError
from .tensor import Tensor

KIND_PARAMETER = "trained-parameter"
KIND_STATISTIC = "running-statistic"
_KIND_CODES = {KIND_PARAMETER: 0, KIND_STATISTIC: 1}
_KIND_NAMES = {code: kind for kind, code in _KIND_CODES.items()}

WEIGHT_MAGIC = b"FTWN"
WEIGHT_VERSION = 1


class StateEntry(NamedTuple):
    name: str
    kind: str
    tensor: Tensor


class ModelState:
    """Ordered, uniquely named collection of model tensors.

    Order is canonical (definition order), so two states built from the
    same architecture are index-aligned and can be averaged entrywise.
    """

    def __init__(self, entries: Iterable[StateEntry]):
        self.entries = [StateEntry(*e) for e in entries]
        self._index = {}
        for entry in self.entries:
            if entry.kind not in _KIND_CODES:
                raise ContractError(f"unknown entry kind {entry.kind!r}")
            if entry.name in self._index:
                raise ContractError(f"duplicate entry name {entry.name!r}")
            self._index[entry.name] = entry
        self.arch_hash: bytes | None = None

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, name: str) -> bool:
        return name in self._index

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._index[name].tensor
        except KeyError:
            raise KeyError(f"no entry named {name!r}") from None

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def parameters(self) -> list[StateEntry]:
        return [e for e in self.entries if e.kind == KIND_PARAMETER]

    def n_parameters(self) -> int:
        return sum(e.tensor.data.size for e in self.parameters())

    def clone(self) -> "ModelState":
        out = ModelState(
            StateEntry(e.name, e.kind, Tensor(e.tensor.data.copy(), requires_grad=True))
            for e in self.entries
        )
        out.arch_hash = self.arch_hash
        return out

    def zero_grads(self) -> None:
        for entry in self.entries:
            entry.tensor.grad = None

    def checksum(self) -> str:
        digest = hashlib.sha256()
        for entry in self.entries:
            digest.update(entry.name.encode())
            digest.update(_binio.u8(_KIND_CODES[entry.kind]))
            digest.update(_binio.f64_array(entry.tensor.data))
        return digest.hexdigest()[:16]


@dataclass(frozen=True)
class BackboneConfig:
    """Conv-stack shape: per block (out_channels, kernel, stride)."""

    in_channels: int = 3
    conv_blocks: tuple[tuple[int, int, int], ...] = ((16, 7, 2), (32, 5, 2), (64, 3, 2))
    feature_dim: int = 64

    def __post_init__(self):
        if self.in_channels < 1:
            raise ContractError("in_channels must be positive")
        for out_channels, kernel, stride in self.conv_blocks:
            if min(out_channels, kernel, stride) < 1:
                raise ContractError(
                    f"conv block extents must be positive: {(out_channels, kernel, stride)}"
                )
        if self.feature_dim != self.conv_blocks[-1][0]:
            raise ContractError(
                "feature_dim must equal the final conv block width, got "
                f"{self.feature_dim} vs {self.conv_blocks[-1][0]}"
            )


@dataclass(frozen=True)
class ModelConfig:
    """Backbone plus optional heads.

    ``n_classes`` attaches a linear+softmax classifier; ``projector_dims``
    (hidden, out) attaches the projection head. The projector must widen:
    out > feature_dim.
    """

    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    n_classes: int | None = None
    projector_dims: tuple[int, int] | None = None

    def __post_init__(self):
        if self.n_classes is not None and self.n_classes < 2:
            raise ContractError("classifier needs at least 2 classes")
        if self.projector_dims is not None:
            hidden, out = self.projector_dims
            if min(hidden, out) < 1:
                raise ContractError("projector dims must be positive")
            if out <= self.backbone.feature_dim:
                raise ContractError(
                    "projector output must be wider than the feature dim, got "
                    f"{out} <= {self.backbone.feature_dim}"
                )


def supervised_config(n_classes: int = 8, backbone: BackboneConfig | None = None) -> ModelConfig:
    return ModelConfig(backbone=backbone or BackboneConfig(), n_classes=n_classes)


def barlow_config(projector_dims=(128, 128), backbone: BackboneConfig | None = None) -> ModelConfig:
    return ModelConfig(backbone=backbone or BackboneConfig(), projector_dims=tuple(projector_dims))


def architecture_hash(config: ModelConfig) -> bytes:
    """8-byte digest of the architecture, stored in weight files to
    refuse loads into a mismatched model."""
    text = repr(
        (
            config.backbone.in_channels,
            config.backbone.conv_blocks,
            config.backbone.feature_dim,
            config.n_classes,
            config.projector_dims,
        )
    )
    return hashlib.sha256(text.encode()).digest()[:8]


def _kaiming_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_weights(config: ModelConfig, seed: int) -> ModelState:
    """Kaiming-uniform fan-in weights, zero biases; deterministic per seed.

    Draw order is fixed (conv blocks, classifier, projector), so equal
    seeds give bit-identical states.
    """
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    entries = []

    def param(name, data):
        entries.append(StateEntry(name, KIND_PARAMETER, Tensor(data, requires_grad=True)))

    c_in = config.backbone.in_channels
    for i, (c_out, kernel, _stride) in enumerate(config.backbone.conv_blocks, start=1):
        fan_in = c_in * kernel
        param(f"conv{i}.weight", _kaiming_uniform(rng, (c_out, c_in, kernel), fan_in))
        param(f"conv{i}.bias", np.zeros(c_out))
        c_in = c_out

    feat = config.backbone.feature_dim
    if config.n_classes is not None:
        param("classifier.weight", _kaiming_uniform(rng, (feat, config.n_classes), feat))
        param("classifier.bias", np.zeros(config.n_classes))
    if config.projector_dims is not None:
        hidden, out = config.projector_dims
        param("projector.fc1.weight", _kaiming_uniform(rng, (feat, hidden), feat))
        param("projector.fc1.bias", np.zeros(hidden))
        param("projector.fc2.weight", _kaiming_uniform(rng, (hidden, out), hidden))
        param("projector.fc2.bias", np.zeros(out))

    state = ModelState(entries)
    state.arch_hash = architecture_hash(config)
    return state


def init_linear_classifier(
    in_dim: int, n_classes: int, seed: int, zero_init: bool = False
) -> ModelState:
    """Standalone linear+softmax classifier.

    ``zero_init`` starts the weights at zero, the natural origin for a
    convex logistic problem (the linear probe uses this so 75 epochs of
    Adam suffice regardless of feature scale)."""
    if n_classes < 2:
        raise ContractError("classifier needs at least 2 classes")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    if zero_init:
        weight = np.zeros((in_dim, n_classes))
    else:
        weight = _kaiming_uniform(rng, (in_dim, n_classes), in_dim)
    return ModelState(
        [
            StateEntry(
                "classifier.weight", KIND_PARAMETER, Tensor(weight, requires_grad=True)
            ),
            StateEntry(
                "classifier.bias",
                KIND_PARAMETER,
                Tensor(np.zeros(n_classes), requires_grad=True),
            ),
        ]
    )


def backbone_forward(state: ModelState, x, config: ModelConfig | BackboneConfig | None = None) -> Tensor:
    """Window batch (B, C, L) -> features (B, D) via convs, relu, and
    global average pooling over time."""
    backbone = _backbone_of(config)
    xt = x if isinstance(x, Tensor) else Tensor(x)
    if xt.ndim != 3 or xt.shape[1] != backbone.in_channels:
        raise DimensionError(
            f"expected windows shaped (B, {backbone.in_channels}, L), got {xt.shape}"
        )
    h = xt
    for i, (_c_out, kernel, stride) in enumerate(backbone.conv_blocks, start=1):
        h = T.conv1d(
            h,
            state[f"conv{i}.weight"],
            state[f"conv{i}.bias"],
            stride=stride,
            padding=kernel // 2,
        )
        h = T.relu(h)
    return T.reduce_mean(h, axis=2)


def classifier_forward(state: ModelState, features) -> Tensor:
    """Features (B, D) -> class probabilities (B, K); rows lie on the
    K-simplex (stable softmax)."""
    f = features if isinstance(features, Tensor) else Tensor(features)
    logits = T.linear(f, state["classifier.weight"], state["classifier.bias"])
    batch, k = logits.shape
    peak = T.reduce_max(logits, axis=1).reshape((batch, 1)).broadcast_to((batch, k))
    shifted = T.exp(logits - peak)
    total = T.reduce_sum(shifted, axis=1).reshape((batch, 1)).broadcast_to((batch, k))
    return shifted / total


def projector_forward(state: ModelState, features) -> Tensor:
    """Features (B, D) -> projections (B, P) with P > D."""
    f = features if isinstance(features, Tensor) else Tensor(features)
    h = T.relu(T.linear(f, state["projector.fc1.weight"], state["projector.fc1.bias"]))
    return T.linear(h, state["projector.fc2.weight"], state["projector.fc2.bias"])


def _backbone_of(config) -> BackboneConfig:
    if config is None:
        return BackboneConfig()
    if isinstance(config, ModelConfig):
        return config.backbone
    return config


# ----------------------------------------------------------------------
# weight files
# ----------------------------------------------------------------------

def state_to_bytes(state: ModelState, arch_hash: bytes | None = None) -> bytes:
    arch = arch_hash if arch_hash is not None else (state.arch_hash or b"\x00" * 8)
    if len(arch) != 8:
        raise ContractError("architecture hash must be 8 bytes")
    blob = [WEIGHT_MAGIC, _binio.u32(WEIGHT_VERSION), arch, _binio.u32(len(state))]
    for name, kind, tensor in state.entries:
        encoded = name.encode()
        blob.append(_binio.u16(len(encoded)))
        blob.append(encoded)
        blob.append(_binio.u8(_KIND_CODES[kind]))
        blob.append(_binio.u8(tensor.data.ndim))
        for extent in tensor.data.shape:
            blob.append(_binio.u32(extent))
        blob.append(_binio.f64_array(tensor.data))
    return b"".join(blob)


def state_from_bytes(data: bytes, source: str = "weights", expected_hash: bytes | None = None) -> ModelState:
    reader = _binio.Reader(data, source)
    magic = reader.take(4, "magic")
    if magic != WEIGHT_MAGIC:
        raise FormatError(f"{source}: bad magic {magic!r} at offset 0")
    version = reader.u32("version")
    if version != WEIGHT_VERSION:
        raise FormatError(f"{source}: unsupported version {version} at offset 4")
    arch = reader.take(8, "architecture hash")
    if expected_hash is not None and arch != expected_hash:
        raise FormatError(
            f"{source}: architecture hash mismatch "
            f"(file {arch.hex()}, expected {expected_hash.hex()})"
        )
    count = reader.u32("entry count")
    entries = []
    for i in range(count):
        name_len = reader.u16(f"entry {i} name length")
        name = reader.take(name_len, f"entry {i} name").decode()
        kind_code = reader.u8(f"entry {i} kind")
        if kind_code not in _KIND_NAMES:
            raise FormatError(
                f"{source}: entry {i} has unknown kind {kind_code} "
                f"at offset {reader.pos - 1}"
            )
        rank = reader.u8(f"entry {i} rank")
        shape = tuple(reader.u32(f"entry {i} extent {d}") for d in range(rank))
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        values = reader.f64_array(size, f"entry {i} data").reshape(shape)
        entries.append(
            StateEntry(name, _KIND_NAMES[kind_code], Tensor(values, requires_grad=True))
        )
    reader.expect_end()
    state = ModelState(entries)
    state.arch_hash = arch
    return state


def save_state(state: ModelState, path, arch_hash: bytes | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(state_to_bytes(state, arch_hash))


def load_state(path, expected_hash: bytes | None = None) -> ModelState:
    with open(path, "rb") as fh:
        data = fh.read()
    return state_from_bytes(data, source=str(path), expected_hash=expected_hash)
