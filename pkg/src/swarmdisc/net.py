"""From-scratch convolutional embedding network.

Three strided conv layers and three fully-connected layers map a 1x50x50
image to a 5-dimensional behavior vector. Forward/backward are plain numpy
(im2col convolutions); parameters live in float32 by default so checkpoints
round-trip bit-exactly, with float64 available for numerical tests.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict

import numpy as np

from .errors import ContractError

EMBED_DIM = 5
CHECKPOINT_MAGIC = "swemb 1"
CHECKPOINT_EXTENSION = ".swemb"


@dataclass(frozen=True)
class ConvSpec:
    in_channels: int
    out_channels: int
    kernel: int
    stride: int
    padding: int
    activation: str = "relu"

    kind: str = "conv"


@dataclass(frozen=True)
class DenseSpec:
    in_features: int
    out_features: int
    activation: str = "linear"

    kind: str = "dense"


def default_spec(embed_dim: int = EMBED_DIM) -> list:
    """Smallest stack matching the declared depth at 50x50 input: 50->25->13->7."""
    return [
        ConvSpec(1, 8, kernel=5, stride=2, padding=2),
        ConvSpec(8, 16, kernel=3, stride=2, padding=1),
        ConvSpec(16, 32, kernel=3, stride=2, padding=1),
        DenseSpec(32 * 7 * 7, 256, activation="relu"),
        DenseSpec(256, 64, activation="relu"),
        DenseSpec(64, embed_dim, activation="linear"),
    ]


def _conv_out_hw(hw: tuple[int, int], spec: ConvSpec) -> tuple[int, int]:
    h = (hw[0] + 2 * spec.padding - spec.kernel) // spec.stride + 1
    w = (hw[1] + 2 * spec.padding - spec.kernel) // spec.stride + 1
    return h, w


def _im2col(x: np.ndarray, k: int, stride: int, pad: int):
    b, c, h, w = x.shape
    out_h = (h + 2 * pad - k) // stride + 1
    out_w = (w + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols = np.empty((b, c, k, k, out_h, out_w), dtype=x.dtype)
    for i in range(k):
        for j in range(k):
            cols[:, :, i, j, :, :] = xp[:, :, i:i + stride * out_h:stride,
                                        j:j + stride * out_w:stride]
    return cols.reshape(b, c * k * k, out_h * out_w), out_h, out_w


def _col2im(dcols: np.ndarray, x_shape, k: int, stride: int, pad: int,
            out_h: int, out_w: int) -> np.ndarray:
    b, c, h, w = x_shape
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(b, c, k, k, out_h, out_w)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + stride * out_h:stride, j:j + stride * out_w:stride] += d6[:, :, i, j]
    return dxp[:, :, pad:pad + h, pad:pad + w]


class EmbeddingNetwork:
    """Parameter container plus forward/backward for the declared layer stack."""

    def __init__(self, spec, weights, biases, input_hw=(50, 50)):
        self.spec = list(spec)
        self.weights = list(weights)
        self.biases = list(biases)
        self.input_hw = tuple(input_hw)
        self._validate()

    def _validate(self):
        if len(self.weights) != len(self.spec) or len(self.biases) != len(self.spec):
            raise ContractError("one weight and bias tensor per layer required")
        hw = self.input_hw
        channels = None
        flat = None
        for idx, layer in enumerate(self.spec):
            w, b = self.weights[idx], self.biases[idx]
            if isinstance(layer, ConvSpec):
                if flat is not None:
                    raise ContractError("conv layer after dense layer")
                if channels is not None and layer.in_channels != channels:
                    raise ContractError(f"layer {idx}: channel mismatch")
                expect = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
                if w.shape != expect or b.shape != (layer.out_channels,):
                    raise ContractError(f"layer {idx}: weight shape {w.shape} != {expect}")
                channels = layer.out_channels
                hw = _conv_out_hw(hw, layer)
            else:
                if flat is None:
                    flat = (channels if channels is not None else 1) * hw[0] * hw[1]
                if layer.in_features != flat:
                    raise ContractError(
                        f"layer {idx}: in_features {layer.in_features} != incoming {flat}")
                if w.shape != (layer.out_features, layer.in_features) or \
                        b.shape != (layer.out_features,):
                    raise ContractError(f"layer {idx}: dense shape mismatch")
                flat = layer.out_features
            if not np.all(np.isfinite(w)) or not np.all(np.isfinite(b)):
                raise ContractError(f"layer {idx}: non-finite parameters")
        self.output_dim = flat if flat is not None else None

    @property
    def dtype(self):
        return self.weights[0].dtype

    @property
    def n_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    @classmethod
    def initialize(cls, spec=None, seed: int = 0, dtype=np.float32,
                   input_hw=(50, 50)) -> "EmbeddingNetwork":
        """Fan-in-scaled uniform weights, zero biases, seeded."""
        if spec is None:
            spec = default_spec()
        rng = np.random.default_rng(seed)
        weights, biases = [], []
        for layer in spec:
            if isinstance(layer, ConvSpec):
                fan_in = layer.in_channels * layer.kernel * layer.kernel
                shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
                bias_n = layer.out_channels
            else:
                fan_in = layer.in_features
                shape = (layer.out_features, layer.in_features)
                bias_n = layer.out_features
            bound = 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=shape).astype(dtype))
            biases.append(np.zeros(bias_n, dtype=dtype))
        return cls(spec, weights, biases, input_hw=input_hw)

    def _prepare_input(self, images: np.ndarray) -> np.ndarray:
        x = np.asarray(images, dtype=self.dtype)
        if x.ndim == 2:
            x = x[None, :, :]
        if x.ndim != 3 or x.shape[1:] != self.input_hw:
            raise ContractError(
                f"expected images of shape (B, {self.input_hw[0]}, {self.input_hw[1]})"
                f", got {x.shape}")
        return x[:, None, :, :]

    def forward(self, images: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(images, keep_cache=False)
        return out

    def forward_cached(self, images: np.ndarray, keep_cache: bool = True):
        x = self._prepare_input(images)
        caches = []
        for layer, w, b in zip(self.spec, self.weights, self.biases):
            if isinstance(layer, ConvSpec):
                cols, oh, ow = _im2col(x, layer.kernel, layer.stride, layer.padding)
                w2d = w.reshape(layer.out_channels, -1)
                z = np.matmul(w2d, cols) + b[None, :, None]
                z = z.reshape(x.shape[0], layer.out_channels, oh, ow)
                cache = (x.shape, cols, z, oh, ow) if keep_cache else None
                x = np.maximum(z, 0) if layer.activation == "relu" else z
            else:
                if x.ndim > 2:
                    x = x.reshape(x.shape[0], -1)
                # per-sample matvec keeps each row's reduction independent of
                # batch position, so batched == per-item evaluation bit-exactly
                z = np.matmul(w, x[:, :, None])[:, :, 0] + b[None, :]
                cache = (x, z) if keep_cache else None
                x = np.maximum(z, 0) if layer.activation == "relu" else z
            caches.append(cache)
        return x, caches

    def backward(self, caches, grad_out: np.ndarray):
        """Gradients of sum(grad_out * output) w.r.t. every parameter."""
        grads_w = [None] * len(self.spec)
        grads_b = [None] * len(self.spec)
        dy = np.asarray(grad_out, dtype=self.dtype)
        for idx in range(len(self.spec) - 1, -1, -1):
            layer, w = self.spec[idx], self.weights[idx]
            if isinstance(layer, ConvSpec):
                x_shape, cols, z, oh, ow = caches[idx]
                if dy.ndim == 2:
                    dy = dy.reshape(dy.shape[0], layer.out_channels, oh, ow)
                if layer.activation == "relu":
                    dy = dy * (z > 0)
                dyf = dy.reshape(dy.shape[0], layer.out_channels, oh * ow)
                grads_w[idx] = np.einsum("bol,bcl->oc", dyf, cols).reshape(w.shape)
                grads_b[idx] = dyf.sum(axis=(0, 2))
                w2d = w.reshape(layer.out_channels, -1)
                dcols = np.matmul(w2d.T, dyf)
                dy = _col2im(dcols, x_shape, layer.kernel, layer.stride,
                             layer.padding, oh, ow)
            else:
                x, z = caches[idx]
                if layer.activation == "relu":
                    dy = dy * (z > 0)
                grads_w[idx] = np.matmul(dy.T, x)
                grads_b[idx] = dy.sum(axis=0)
                dy = np.matmul(dy, w)
        return grads_w, grads_b

    def clone(self) -> "EmbeddingNetwork":
        return EmbeddingNetwork(self.spec, [w.copy() for w in self.weights],
                                [b.copy() for b in self.biases], self.input_hw)

    def save(self, path, meta: dict | None = None) -> None:
        """Text header (layer spec, shapes, version) + little-endian float32 tensors."""
        layers = []
        tensors = []
        for idx, layer in enumerate(self.spec):
            layers.append(asdict(layer))
            tensors.append({"shape": list(self.weights[idx].shape)})
            tensors.append({"shape": list(self.biases[idx].shape)})
        header = {
            "format": "swemb",
            "version": 1,
            "input_hw": list(self.input_hw),
            "layers": layers,
            "tensors": tensors,
        }
        if meta:
            header["meta"] = meta
        with open(path, "wb") as fh:
            fh.write((CHECKPOINT_MAGIC + "\n").encode("ascii"))
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode("ascii"))
            for idx in range(len(self.spec)):
                fh.write(np.ascontiguousarray(self.weights[idx], dtype="<f4").tobytes())
                fh.write(np.ascontiguousarray(self.biases[idx], dtype="<f4").tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingNetwork":
        with open(path, "rb") as fh:
            magic = fh.readline().decode("ascii").strip()
            if magic != CHECKPOINT_MAGIC:
                raise ContractError(f"{path}: not a {CHECKPOINT_EXTENSION} checkpoint")
            header = json.loads(fh.readline().decode("ascii"))
            spec = []
            for item in header["layers"]:
                kind = item.pop("kind", "conv" if "kernel" in item else "dense")
                spec.append(ConvSpec(kind=kind, **item) if kind == "conv"
                            else DenseSpec(kind=kind, **item))
            weights, biases = [], []
            shapes = [tuple(t["shape"]) for t in header["tensors"]]
            for w_shape, b_shape in zip(shapes[0::2], shapes[1::2]):
                w = np.frombuffer(fh.read(4 * int(np.prod(w_shape))), dtype="<f4")
                b = np.frombuffer(fh.read(4 * int(np.prod(b_shape))), dtype="<f4")
                if w.size != np.prod(w_shape) or b.size != np.prod(b_shape):
                    raise ContractError(f"{path}: truncated checkpoint")
                weights.append(w.reshape(w_shape).astype(np.float32))
                biases.append(b.reshape(b_shape).astype(np.float32))
        return cls(spec, weights, biases, input_hw=tuple(header["input_hw"]))
