"""Three-layer convolutional network mapping rainy detail layers to clean ones.

Layers 1 and 2 are convolution + tanh, layer 3 is a linear convolution back
to three channels. All convolutions are valid, so the output side shrinks by
``s1 + s2 + s3 - 3`` pixels.

Parameters are stored in whatever float dtype they were created with
(float32 by default, matching the weight file) while every forward and
backward computation runs in float64.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Protocol, Sequence

import numpy as np

from .numerics import (KernelBank, ShapeError, conv_backward, conv_forward_cached, conv_valid,
                       tanh_backward, tanh_map)

log = logging.getLogger(__name__)

MAGIC = b"DRNW"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIIIIII")

# keep whole-image inference under roughly this many bytes of layer-1 activations
_MAX_FEATURE_BYTES = 96 * 1024 * 1024


class TrainingDiverged(RuntimeError):
    """Loss or gradient became non-finite."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class WeightFileError(ValueError):
    pass


@dataclass
class NetworkParams:
    layer1: KernelBank
    layer2: KernelBank
    layer3: KernelBank

    def __post_init__(self):
        l1, l2, l3 = self.layers
        if l1.in_channels != 3:
            raise ShapeError(f"layer1 must take 3 channels, takes {l1.in_channels}")
        if l2.in_channels != l1.count:
            raise ShapeError(f"layer2 takes {l2.in_channels} channels but layer1 emits {l1.count}")
        if l3.in_channels != l2.count:
            raise ShapeError(f"layer3 takes {l3.in_channels} channels but layer2 emits {l2.count}")
        if l3.count != 3:
            raise ShapeError(f"layer3 must emit 3 channels, emits {l3.count}")
        for bank in self.layers:
            if bank.size[0] != bank.size[1]:
                raise ShapeError(f"kernels must be square, got {bank.size}")

    @property
    def layers(self) -> tuple[KernelBank, KernelBank, KernelBank]:
        return self.layer1, self.layer2, self.layer3

    @property
    def kernel_sizes(self) -> tuple[int, int, int]:
        return tuple(b.size[0] for b in self.layers)

    @property
    def widths(self) -> tuple[int, int]:
        return self.layer1.count, self.layer2.count

    @property
    def shrink(self) -> int:
        """Pixels lost per spatial dimension by the three valid convolutions."""
        return sum(self.kernel_sizes) - 3

    @property
    def min_input_side(self) -> int:
        return sum(self.kernel_sizes) - 2

    def output_side(self, input_side: int) -> int:
        return input_side - self.shrink

    def num_parameters(self) -> int:
        return sum(b.weights.size + b.bias.size for b in self.layers)

    def astype(self, dtype) -> NetworkParams:
        return NetworkParams(*(b.astype(dtype) for b in self.layers))

    def copy(self) -> NetworkParams:
        return NetworkParams(*(b.copy() for b in self.layers))

    def equals(self, other: NetworkParams) -> bool:
        """Bitwise equality of every weight and bias."""
        return all(
            a.weights.dtype == b.weights.dtype
            and np.array_equal(a.weights, b.weights) and np.array_equal(a.bias, b.bias)
            for a, b in zip(self.layers, other.layers))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.01
    batch_size: int = 16
    steps: int = 1000
    patch_size: int = 64
    rng_seed: int = 0
    domain: str = "detail"
    # "per_value": the step is learning_rate / (output values per sample), i.e.
    # plain SGD on the per-value mean squared error. "per_sample": the raw
    # gradient of the summed loss, which diverges for learning rates near 0.01.
    step_scale: str = "per_value"

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.steps < 0:
            raise ValueError(f"steps must be >= 0, got {self.steps}")
        if self.domain not in ("detail", "image"):
            raise ValueError(f"domain must be 'detail' or 'image', got {self.domain!r}")
        if self.step_scale not in ("per_value", "per_sample"):
            raise ValueError(f"step_scale must be 'per_value' or 'per_sample', got {self.step_scale!r}")

    def check_against(self, params: NetworkParams) -> None:
        if self.patch_size <= params.shrink:
            raise ValueError(
                f"patch_size {self.patch_size} leaves no output for kernel sizes "
                f"{params.kernel_sizes}; need > {params.shrink}")

    def effective_rate(self, params: NetworkParams) -> float:
        """Step size applied to the gradient of the summed per-sample loss."""
        if self.step_scale == "per_sample":
            return self.learning_rate
        side = params.output_side(self.patch_size)
        return self.learning_rate / (side * side * 3)


@dataclass
class PatchPair:
    """Network input patch and its center-cropped target, both (side, side, 3)."""

    input: np.ndarray
    target: np.ndarray


def init_params(s1: int = 16, s2: int = 1, s3: int = 8, n1: int = 512, n2: int = 512,
                seed: int = 0, std: float = 0.001, dtype=np.float32,
                scheme: str = "fixed") -> NetworkParams:
    """Gaussian weights and zero biases, deterministic in ``seed``.

    ``scheme="fixed"`` draws every weight with standard deviation ``std``.
    ``scheme="fan_in"`` ignores ``std`` and uses ``1 / sqrt(kh * kw * in_channels)`` per layer,
    which keeps activations at unit scale instead of starting near the
    all-zero saddle point where small networks stall.
    """
    for name, v in (("s1", s1), ("s2", s2), ("s3", s3), ("n1", n1), ("n2", n2)):
        if v < 1:
            raise ValueError(f"{name} must be >= 1, got {v}")
    if scheme not in ("fixed", "fan_in"):
        raise ValueError(f"init scheme must be 'fixed' or 'fan_in', got {scheme!r}")
    rng = np.random.default_rng(seed)
    shapes = [(n1, s1, s1, 3), (n2, s2, s2, n1), (3, s3, s3, n2)]
    banks = []
    for s in shapes:
        scale = std if scheme == "fixed" else 1.0 / np.sqrt(s[1] * s[2] * s[3])
        banks.append(KernelBank(rng.normal(0.0, scale, size=s).astype(dtype),
                                np.zeros(s[0], dtype=dtype)))
    return NetworkParams(*banks)


def _check_input(params: NetworkParams, x: np.ndarray) -> None:
    if x.shape[-1] != 3:
        raise ShapeError(f"network input must have 3 channels, got shape {x.shape}")
    h, w = x.shape[-3], x.shape[-2]
    need = params.min_input_side
    if h < need or w < need:
        raise ShapeError(f"input {h}x{w} is smaller than the network minimum {need}x{need}")


def _forward_layers(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    f1 = tanh_map(conv_valid(x, params.layer1))
    f2 = tanh_map(conv_valid(f1, params.layer2))
    return conv_valid(f2, params.layer3)


def forward(params: NetworkParams, x: np.ndarray) -> np.ndarray:
    """Run the network on one (H, W, 3) detail layer or an (N, H, W, 3) batch.

    Large single images are processed in horizontal strips; the result is
    identical because every output row depends on a bounded band of input rows.
    """
    _check_input(params, x)
    if x.ndim != 3:
        return _forward_layers(params, x)
    h, w, _ = x.shape
    shrink = params.shrink
    ho = h - shrink
    row_bytes = (w - params.kernel_sizes[0] + 1) * params.layer1.count * 8
    strip = max(1, _MAX_FEATURE_BYTES // max(row_bytes, 1))
    if strip >= ho:
        return _forward_layers(params, x)
    out = np.empty((ho, w - shrink, 3))
    for r0 in range(0, ho, strip):
        r1 = min(ho, r0 + strip)
        out[r0:r1] = _forward_layers(params, x[r0:r1 + shrink])
    return out


def _stack(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, tuple) and len(batch) == 2 and isinstance(batch[0], np.ndarray):
        x, t = batch
    else:
        if len(batch) == 0:
            raise ValueError("batch is empty")
        x = np.stack([p.input for p in batch])
        t = np.stack([p.target for p in batch])
    if len(x) == 0:
        raise ValueError("batch is empty")
    return np.asarray(x, dtype=np.float64), np.asarray(t, dtype=np.float64)


def _check_targets(params: NetworkParams, x: np.ndarray, t: np.ndarray) -> None:
    _check_input(params, x)
    expected = (x.shape[0], x.shape[1] - params.shrink, x.shape[2] - params.shrink, 3)
    if t.shape != expected:
        raise ShapeError(f"target shape {t.shape} does not match network output shape {expected}")


def loss(params: NetworkParams, batch) -> float:
    """Mean over samples of the squared Frobenius norm of the residual.

    ``batch`` is a sequence of :class:`PatchPair` or an ``(inputs, targets)``
    pair of stacked arrays. Pixels are summed, not averaged.
    """
    x, t = _stack(batch)
    _check_targets(params, x, t)
    r = forward(params, x) - t
    return float(np.sum(r * r) / len(x))


def loss_and_grad(params: NetworkParams, batch) -> tuple[float, NetworkParams]:
    """Batch loss and its float64 gradient with respect to every parameter."""
    x, t = _stack(batch)
    _check_targets(params, x, t)
    n = len(x)
    z1, cols1 = conv_forward_cached(x, params.layer1)
    f1 = tanh_map(z1)
    z2, cols2 = conv_forward_cached(f1, params.layer2)
    f2 = tanh_map(z2)
    out, cols3 = conv_forward_cached(f2, params.layer3)
    resid = out - t
    value = float(np.sum(resid * resid) / n)

    g_out = resid * (2.0 / n)
    g_f2, g3 = conv_backward(f2, params.layer3, g_out, cols=cols3)
    g_z2 = tanh_backward(f2, g_f2)
    g_f1, g2 = conv_backward(f1, params.layer2, g_z2, cols=cols2)
    g_z1 = tanh_backward(f1, g_f1)
    _, g1 = conv_backward(x, params.layer1, g_z1, cols=cols1, need_input_grad=False)
    return value, NetworkParams(g1, g2, g3)


def sgd_step(params: NetworkParams, batch, learning_rate: float) -> tuple[NetworkParams, float]:
    """One plain SGD update; returns the new parameters and the pre-update batch loss."""
    with np.errstate(over="ignore", invalid="ignore"):
        value, grads = loss_and_grad(params, batch)
    if not np.isfinite(value):
        raise TrainingDiverged(f"non-finite loss {value}")
    new_banks = []
    for bank, g in zip(params.layers, grads.layers):
        if not (np.all(np.isfinite(g.weights)) and np.all(np.isfinite(g.bias))):
            raise TrainingDiverged("non-finite gradient")
        dtype = bank.weights.dtype
        with np.errstate(over="ignore", invalid="ignore"):
            w = (bank.weights.astype(np.float64) - learning_rate * g.weights).astype(dtype)
            b = (bank.bias.astype(np.float64) - learning_rate * g.bias).astype(dtype)
        if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
            raise TrainingDiverged("parameters overflowed")
        new_banks.append(KernelBank(w, b))
    return NetworkParams(*new_banks), value


class PatchSource(Protocol):
    """Random-access collection of patch pairs used by :func:`train`."""

    def __len__(self) -> int: ...

    def batch(self, indices: np.ndarray) -> tuple[np.ndarray, np.ndarray]: ...


class InMemoryPatches:
    def __init__(self, pairs: Sequence[PatchPair]):
        self.inputs = np.stack([p.input for p in pairs]) if pairs else np.empty((0,))
        self.targets = np.stack([p.target for p in pairs]) if pairs else np.empty((0,))

    def __len__(self) -> int:
        return len(self.inputs)

    def batch(self, indices):
        return self.inputs[indices], self.targets[indices]


@dataclass
class TrainResult:
    params: NetworkParams
    losses: list[float] = field(default_factory=list)


def _batch_indices(n: int, batch_size: int, rng: np.random.Generator) -> Iterator[np.ndarray]:
    """Shuffled mini-batches forever, reshuffling at each epoch boundary."""
    order = rng.permutation(n)
    pos = 0
    while True:
        idx = []
        while len(idx) < batch_size:
            if pos == n:
                order = rng.permutation(n)
                pos = 0
            take = min(batch_size - len(idx), n - pos)
            idx.extend(order[pos:pos + take])
            pos += take
        yield np.asarray(idx)


def train(dataset, cfg: TrainConfig, params: NetworkParams, *,
          log_every: int = 500,
          checkpoint: Callable[[int, NetworkParams], None] | None = None,
          checkpoint_every: int = 0) -> TrainResult:
    """Run ``cfg.steps`` SGD updates over shuffled mini-batches of ``dataset``.

    ``dataset`` is a :class:`PatchSource` or a sequence of :class:`PatchPair`.
    ``checkpoint(step, params)`` is called every ``checkpoint_every`` steps.
    The returned loss history has one entry per step.
    """
    cfg.check_against(params)
    if not hasattr(dataset, "batch"):
        dataset = InMemoryPatches(list(dataset))
    if len(dataset) == 0:
        raise ValueError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.rng_seed)
    batches = _batch_indices(len(dataset), cfg.batch_size, rng)
    rate = cfg.effective_rate(params)
    losses: list[float] = []
    for step in range(1, cfg.steps + 1):
        try:
            params, value = sgd_step(params, dataset.batch(next(batches)), rate)
        except TrainingDiverged as exc:
            raise TrainingDiverged(f"training diverged at step {step}: {exc}", step=step) from None
        losses.append(value)
        if log_every and step % log_every == 0:
            window = losses[-log_every:]
            log.info("step %d/%d  loss %.6g (mean of last %d: %.6g)",
                     step, cfg.steps, value, len(window), sum(window) / len(window))
        if checkpoint is not None and checkpoint_every and step % checkpoint_every == 0:
            checkpoint(step, params)
    return TrainResult(params=params, losses=losses)


def smoothed(losses: Sequence[float], window: int = 500) -> np.ndarray:
    """Trailing moving average; the first ``window - 1`` entries average what is available."""
    a = np.asarray(losses, dtype=np.float64)
    if a.size == 0:
        return a
    c = np.concatenate([[0.0], np.cumsum(a)])
    idx = np.arange(1, a.size + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def save_params(path: str | Path, params: NetworkParams) -> None:
    """Write the little-endian ``DRNW`` weight file (float32 payload)."""
    s1, s2, s3 = params.kernel_sizes
    n1, n2 = params.widths
    chunks = [_HEADER.pack(MAGIC, FORMAT_VERSION, s1, s2, s3, n1, n2)]
    for bank in params.layers:
        chunks.append(np.ascontiguousarray(bank.weights, dtype="<f4").tobytes())
        chunks.append(np.ascontiguousarray(bank.bias, dtype="<f4").tobytes())
    Path(path).write_bytes(b"".join(chunks))


def load_params(path: str | Path) -> NetworkParams:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise WeightFileError(f"{path}: truncated header ({len(data)} bytes)")
    magic, version, s1, s2, s3, n1, n2 = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise WeightFileError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
    if version != FORMAT_VERSION:
        raise WeightFileError(f"{path}: unsupported version {version}")
    shapes = [(n1, s1, s1, 3), (n2, s2, s2, n1), (3, s3, s3, n2)]
    expected = _HEADER.size + 4 * sum(int(np.prod(s)) + s[0] for s in shapes)
    if len(data) != expected:
        raise WeightFileError(f"{path}: size {len(data)} bytes, expected {expected}")
    offset = _HEADER.size
    banks = []
    for shape in shapes:
        parts = []
        for count in (int(np.prod(shape)), shape[0]):
            parts.append(np.frombuffer(data, dtype="<f4", count=count, offset=offset)
                         .astype(np.float32))
            offset += 4 * count
        banks.append(KernelBank(parts[0].reshape(shape), parts[1]))
    return NetworkParams(*banks)

