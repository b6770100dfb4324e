"""Gradient-descent optimizers: Adam (used by every experiment) and
plain SGD.

Optimizers mutate parameter data in place and read gradients left on the
tensors by ``Tape.backward``. Running-statistic entries are never
touched. Moment buffers are keyed by entry name, so an optimizer follows
a client's model through global-state swaps, and its state round-trips
through serialization bit-exactly for checkpointing.
"""

from __future__ import annotations

import numpy as np

from . import _binio
from .errors import ContractError, FormatError
from .models import ModelState

OPTIM_MAGIC = b"FTOP"
OPTIM_VERSION = 1


class Adam:
    """Adam with bias correction and the universal defaults."""

    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr < 0:
            raise ContractError(f"learning rate must be nonnegative, got {lr}")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step_count = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def reset(self) -> None:
        self.step_count = 0
        self.m.clear()
        self.v.clear()

    def step(self, state: ModelState) -> None:
        params = state.parameters()
        for name, _kind, tensor in params:
            if tensor.grad is None:
                raise ContractError(f"missing gradient for parameter {name!r}")
        self.step_count += 1
        t = self.step_count
        bias1 = 1.0 - self.beta1**t
        bias2 = 1.0 - self.beta2**t
        for name, _kind, tensor in params:
            grad = tensor.grad
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(tensor.data)
                self.v[name] = np.zeros_like(tensor.data)
            v = self.v[name]
            if m.shape != tensor.data.shape:
                raise ContractError(
                    f"moment shape {m.shape} does not mirror parameter "
                    f"{name!r} shape {tensor.data.shape}"
                )
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            update = (m / bias1) / (np.sqrt(v / bias2) + self.eps)
            tensor.data -= self.lr * update

    # checkpointing ---------------------------------------------------
    def to_bytes(self) -> bytes:
        blob = [
            OPTIM_MAGIC,
            _binio.u32(OPTIM_VERSION),
            _binio.f64(self.lr),
            _binio.f64(self.beta1),
            _binio.f64(self.beta2),
            _binio.f64(self.eps),
            _binio.u64(self.step_count),
            _binio.u32(len(self.m)),
        ]
        for name in self.m:
            encoded = name.encode()
            blob.append(_binio.u16(len(encoded)))
            blob.append(encoded)
            arr = self.m[name]
            blob.append(_binio.u8(arr.ndim))
            for extent in arr.shape:
                blob.append(_binio.u32(extent))
            blob.append(_binio.f64_array(arr))
            blob.append(_binio.f64_array(self.v[name]))
        return b"".join(blob)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Adam":
        reader = _binio.Reader(data, "optimizer state")
        magic = reader.take(4, "magic")
        if magic != OPTIM_MAGIC:
            raise FormatError(f"optimizer state: bad magic {magic!r} at offset 0")
        version = reader.u32("version")
        if version != OPTIM_VERSION:
            raise FormatError(f"optimizer state: unsupported version {version}")
        out = cls(
            lr=reader.f64("lr"),
            beta1=reader.f64("beta1"),
            beta2=reader.f64("beta2"),
            eps=reader.f64("eps"),
        )
        out.step_count = reader.u64("step count")
        count = reader.u32("moment count")
        for i in range(count):
            name_len = reader.u16(f"moment {i} name length")
            name = reader.take(name_len, f"moment {i} name").decode()
            rank = reader.u8(f"moment {i} rank")
            shape = tuple(reader.u32(f"moment {i} extent {d}") for d in range(rank))
            size = int(np.prod(shape, dtype=np.int64)) if shape else 1
            out.m[name] = reader.f64_array(size, f"moment {i} m").reshape(shape)
            out.v[name] = reader.f64_array(size, f"moment {i} v").reshape(shape)
        reader.expect_end()
        return out


class SGD:
    """Plain w <- w - lr * grad."""

    def __init__(self, lr: float):
        if lr < 0:
            raise ContractError(f"learning rate must be nonnegative, got {lr}")
        self.lr = float(lr)

    def step(self, state: ModelState) -> None:
        params = state.parameters()
        for name, _kind, tensor in params:
            if tensor.grad is None:
                raise ContractError(f"missing gradient for parameter {name!r}")
        for _name, _kind, tensor in params:
            tensor.data -= self.lr * tensor.grad
