"""Minimal CNN autodiff core for single-value regression on small images.

Layers cache their forward activations and implement explicit backward
passes; parameters live in Tensor objects whose buffers are updated in
place by the optimizer. float32 is the working precision, with a float64
mode for tight gradient verification.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class ShapeError(ValueError):
    pass


class Tensor:
    """Parameter buffer with a gradient of the same shape."""

    __slots__ = ("data", "grad")

    def __init__(self, data: np.ndarray):
        self.data = data
        self.grad = np.zeros_like(data)

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad[...] = 0


class Conv2D:
    """k x k convolution with stride s and same-style padding of k // 2."""

    def __init__(self, in_channels, out_channels, kernel, stride, rng, dtype):
        fan_in = in_channels * kernel * kernel
        w = rng.normal(0.0, np.sqrt(2.0 / fan_in), (out_channels, in_channels, kernel, kernel))
        self.weight = Tensor(w.astype(dtype))
        self.bias = Tensor(np.zeros(out_channels, dtype=dtype))
        self.kernel = kernel
        self.stride = stride
        self.pad = kernel // 2
        self._cache = None
        self._idx_cache = {}

    def params(self):
        return [self.weight, self.bias]

    def out_shape(self, shape):
        n, c, h, w = shape
        if c != self.weight.shape[1]:
            raise ShapeError(
                f"conv2d expects {self.weight.shape[1]} channels, got {c}"
            )
        ho = (h + 2 * self.pad - self.kernel) // self.stride + 1
        wo = (w + 2 * self.pad - self.kernel) // self.stride + 1
        if ho < 1 or wo < 1:
            raise ShapeError(f"conv2d output collapses for input {shape}")
        return (n, self.weight.shape[0], ho, wo)

    def _cols(self, xp, ho, wo):
        k, s = self.kernel, self.stride
        win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
        win = win[:, :, ::s, ::s][:, :, :ho, :wo]
        # (N, C, Ho, Wo, k, k) -> (N * Ho * Wo, C * k * k)
        n, c = xp.shape[:2]
        return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
            n * ho * wo, c * k * k
        )

    def _scatter_indices(self, shape, ho, wo):
        key = (shape, ho, wo)
        if key not in self._idx_cache:
            n, c, hp, wp = shape
            k, s = self.kernel, self.stride
            rows = (np.arange(ho) * s)[:, None] + np.arange(k)[None, :]
            cols = (np.arange(wo) * s)[:, None] + np.arange(k)[None, :]
            # flat padded index per (ho, wo, c, kh, kw)
            idx = (
                np.arange(c)[None, None, :, None, None] * (hp * wp)
                + rows[:, None, None, :, None] * wp
                + cols[None, :, None, None, :]
            ).reshape(1, ho * wo, c * k * k)
            offs = (np.arange(n) * c * hp * wp)[:, None, None]
            self._idx_cache[key] = (idx + offs).ravel()
        return self._idx_cache[key]

    def forward(self, x):
        n, c, h, w = x.shape
        _, outc, ho, wo = self.out_shape(x.shape)
        xp = np.pad(x, ((0, 0), (0, 0), (self.pad, self.pad), (self.pad, self.pad)))
        cols = self._cols(xp, ho, wo)
        wmat = self.weight.data.reshape(outc, -1)
        y = cols @ wmat.T + self.bias.data
        self._cache = (xp.shape, cols, ho, wo)
        return y.reshape(n, ho, wo, outc).transpose(0, 3, 1, 2)

    def backward(self, dy):
        xp_shape, cols, ho, wo = self._cache
        n = dy.shape[0]
        outc = self.weight.shape[0]
        dyc = dy.transpose(0, 2, 3, 1).reshape(n * ho * wo, outc)
        self.weight.grad += (dyc.T @ cols).reshape(self.weight.shape)
        self.bias.grad += dyc.sum(axis=0)
        dcols = dyc @ self.weight.data.reshape(outc, -1)
        flat = self._scatter_indices(xp_shape, ho, wo)
        dxp = np.bincount(
            flat, weights=dcols.ravel().astype(np.float64), minlength=int(np.prod(xp_shape))
        ).reshape(xp_shape)
        p = self.pad
        dx = dxp[:, :, p : xp_shape[2] - p, p : xp_shape[3] - p]
        return dx.astype(dy.dtype)


class ReLU:
    def __init__(self):
        self._mask = None

    def params(self):
        return []

    def out_shape(self, shape):
        return shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class MaxPool2:
    """2 x 2 max pooling with stride 2; trailing odd rows/cols are dropped."""

    def __init__(self):
        self._cache = None

    def params(self):
        return []

    def out_shape(self, shape):
        n, c, h, w = shape
        if h < 2 or w < 2:
            raise ShapeError(f"maxpool needs at least 2 x 2 input, got {shape}")
        return (n, c, h // 2, w // 2)

    def forward(self, x):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        v = x[:, :, : 2 * h2, : 2 * w2]
        blocks = v.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, h2, w2, 4
        )
        arg = blocks.argmax(axis=-1)
        self._cache = (x.shape, arg)
        return np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        shape, arg = self._cache
        n, c, h, w = shape
        h2, w2 = h // 2, w // 2
        dblocks = np.zeros((n, c, h2, w2, 4), dtype=dy.dtype)
        np.put_along_axis(dblocks, arg[..., None], dy[..., None], axis=-1)
        dv = dblocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(
            n, c, 2 * h2, 2 * w2
        )
        dx = np.zeros(shape, dtype=dy.dtype)
        dx[:, :, : 2 * h2, : 2 * w2] = dv
        return dx


class GlobalAvgPool:
    def __init__(self):
        self._shape = None

    def params(self):
        return []

    def out_shape(self, shape):
        n, c, _, _ = shape
        return (n, c)

    def forward(self, x):
        self._shape = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, dy):
        n, c, h, w = self._shape
        return np.broadcast_to(dy[:, :, None, None], self._shape) / (h * w)


class Linear:
    def __init__(self, in_features, out_features, rng, dtype):
        w = rng.normal(0.0, np.sqrt(2.0 / in_features), (out_features, in_features))
        self.weight = Tensor(w.astype(dtype))
        self.bias = Tensor(np.zeros(out_features, dtype=dtype))
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def out_shape(self, shape):
        if len(shape) != 2 or shape[1] != self.weight.shape[1]:
            raise ShapeError(
                f"linear expects (N, {self.weight.shape[1]}), got {shape}"
            )
        return (shape[0], self.weight.shape[0])

    def forward(self, x):
        self._x = x
        return x @ self.weight.data.T + self.bias.data

    def backward(self, dy):
        self.weight.grad += dy.T @ self._x
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.data


@dataclass(frozen=True)
class NetworkConfig:
    """Layer recipe; specs chain from a single-channel (height, width) input
    to one scalar output."""

    layers: tuple
    in_height: int
    in_width: int
    dtype: str = "f32"

    @classmethod
    def parse(cls, text: str, in_height: int, in_width: int, dtype: str = "f32"):
        """Parse specs like ``conv3s2c8,relu,maxpool2,gap,linear1``."""
        specs = []
        for token in text.split(","):
            t = token.strip().lower()
            if t.startswith("conv"):
                body = t[4:]
                k, rest = body.split("s")
                s, c = rest.split("c")
                specs.append(("conv2d", int(k), int(s), int(c)))
            elif t == "relu":
                specs.append(("relu",))
            elif t in ("maxpool2", "maxpool"):
                specs.append(("maxpool",))
            elif t in ("gap", "global_avg_pool"):
                specs.append(("gap",))
            elif t.startswith("linear"):
                specs.append(("linear", int(t[6:] or 1)))
            else:
                raise ValueError(f"unknown layer spec {token!r}")
        return cls(tuple(specs), in_height, in_width, dtype)

    def to_text(self) -> str:
        parts = []
        for s in self.layers:
            if s[0] == "conv2d":
                parts.append(f"conv{s[1]}s{s[2]}c{s[3]}")
            elif s[0] == "relu":
                parts.append("relu")
            elif s[0] == "maxpool":
                parts.append("maxpool2")
            elif s[0] == "gap":
                parts.append("gap")
            elif s[0] == "linear":
                parts.append(f"linear{s[1]}")
        return ",".join(parts)


class Network:
    def __init__(self, layers, config: NetworkConfig):
        self.layers = layers
        self.config = config

    def params(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy


def _np_dtype(name: str):
    if name == "f32":
        return np.float32
    if name == "f64":
        return np.float64
    raise ValueError(f"unknown dtype {name!r}")


def build_network(config: NetworkConfig, seed: int) -> Network:
    """Instantiate layers with seed-deterministic He initialization and
    verify the shape chain ends in a single scalar output."""
    dtype = _np_dtype(config.dtype)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(7,)))
    layers = []
    shape = (1, 1, config.in_height, config.in_width)
    for spec in config.layers:
        kind = spec[0]
        if kind == "conv2d":
            _, k, s, c = spec
            layer = Conv2D(shape[1], c, k, s, rng, dtype)
        elif kind == "relu":
            layer = ReLU()
        elif kind == "maxpool":
            layer = MaxPool2()
        elif kind == "gap":
            layer = GlobalAvgPool()
        elif kind == "linear":
            if len(shape) == 4:
                raise ShapeError("linear layer needs pooled (N, F) input; add gap")
            layer = Linear(shape[1], spec[1], rng, dtype)
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        shape = layer.out_shape(shape)
        layers.append(layer)
    if shape != (1, 1):
        raise ShapeError(f"network must emit one scalar per sample, ends at {shape}")
    return Network(layers, config)


def forward(net: Network, images: np.ndarray) -> np.ndarray:
    """Predictions for a batch of decoded images (N, H, W) -> (N,)."""
    x = np.asarray(images, dtype=_np_dtype(net.config.dtype))
    if x.ndim == 2:
        x = x[None]
    if x.shape[1:] != (net.config.in_height, net.config.in_width):
        raise ShapeError(
            f"input {x.shape[1:]} does not match configured "
            f"({net.config.in_height}, {net.config.in_width})"
        )
    return net.forward(x[:, None, :, :])[:, 0]


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean squared error and its gradient with respect to pred."""
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ShapeError("pred and target shapes differ")
    diff = pred - target
    loss = float(np.mean(diff**2))
    return loss, 2.0 * diff / diff.size
