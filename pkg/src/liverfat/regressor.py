"""Training contract for the slice regressor.

MSE loss optimized with Adam, fixed iteration count with batches sampled
with replacement, a single learning-rate drop by a fixed factor over the
final window, and online translation augmentation of the 8-bit inputs.
Targets are fat-fraction percentage points. Everything is deterministic
per seed; the dataset is canonically ordered before sampling so shuffling
the input pairs cannot change the result.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import Network, NetworkConfig, Tensor, build_network, forward, mse_loss
from .preprocess import SliceImage, decode8


@dataclass
class TrainConfig:
    batch_size: int = 32
    total_iterations: int = 6000
    base_lr: float = 1e-4
    lr_drop_factor: float = 10.0
    lr_drop_window: int = 1000
    translation_range: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_drop_window > self.total_iterations:
            raise ValueError("lr drop window exceeds total iterations")
        if self.translation_range < 0:
            raise ValueError("translation_range must be >= 0")


class AdamState:
    """First/second moment buffers and the shared step counter."""

    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8

    def __init__(self, params: list[Tensor]):
        self.m = [np.zeros_like(p.data, dtype=np.float64) for p in params]
        self.v = [np.zeros_like(p.data, dtype=np.float64) for p in params]
        self.step = 0


def adam_step(params: list[Tensor], state: AdamState, lr: float) -> None:
    """Standard bias-corrected Adam update, in place."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - AdamState.beta1**t
    bc2 = 1.0 - AdamState.beta2**t
    for p, m, v in zip(params, state.m, state.v):
        g = p.grad.astype(np.float64)
        m *= AdamState.beta1
        m += (1.0 - AdamState.beta1) * g
        v *= AdamState.beta2
        v += (1.0 - AdamState.beta2) * g * g
        update = lr * (m / bc1) / (np.sqrt(v / bc2) + AdamState.eps)
        p.data -= update.astype(p.data.dtype)


def lr_schedule(iteration: int, cfg: TrainConfig) -> float:
    """Base rate, dropped by the configured factor for the final window."""
    if iteration >= cfg.total_iterations - cfg.lr_drop_window:
        return cfg.base_lr / cfg.lr_drop_factor
    return cfg.base_lr


def translate_image(img: SliceImage, dx: int, dy: int) -> SliceImage:
    """Shift by whole pixels (dx columns, dy rows), vacated pixels 0."""
    out = np.zeros_like(img.data)
    h, w = img.data.shape
    src_r = slice(max(0, -dy), min(h, h - dy))
    src_c = slice(max(0, -dx), min(w, w - dx))
    dst_r = slice(max(0, dy), min(h, h + dy))
    dst_c = slice(max(0, dx), min(w, w + dx))
    out[dst_r, dst_c] = img.data[src_r, src_c]
    return SliceImage(img.width, img.height, out, img.encoding)


def augment_translate(img: SliceImage, rng: np.random.Generator, translation_range: int = 5) -> SliceImage:
    """Random integer shift drawn uniformly in +-range per axis."""
    if translation_range == 0:
        return img
    dx = int(rng.integers(-translation_range, translation_range + 1))
    dy = int(rng.integers(-translation_range, translation_range + 1))
    return translate_image(img, dx, dy)


@dataclass
class TrainLogRow:
    iteration: int
    lr: float
    loss: float


def _canonical_order(dataset):
    return sorted(range(len(dataset)), key=lambda i: (dataset[i][1], dataset[i][0].data.tobytes()))


def train(
    dataset: list[tuple[SliceImage, float]],
    net_cfg: NetworkConfig,
    train_cfg: TrainConfig,
) -> tuple[Network, list[TrainLogRow]]:
    """Train a fresh network on (image, target) pairs.

    Runs exactly total_iterations batches sampled with replacement.
    """
    if not dataset:
        raise ValueError("dataset must not be empty")
    order = _canonical_order(dataset)
    images = [dataset[i][0] for i in order]
    targets = np.array([float(dataset[i][1]) for i in order], dtype=np.float64)

    net = build_network(net_cfg, seed=train_cfg.seed)
    state = AdamState(net.params())
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=train_cfg.seed, spawn_key=(11,))
    )
    n = len(images)
    log = []
    for it in range(train_cfg.total_iterations):
        idx = rng.integers(0, n, size=train_cfg.batch_size)
        batch = np.stack(
            [
                decode8(
                    augment_translate(images[i], rng, train_cfg.translation_range).data,
                    images[i].encoding,
                )
                for i in idx
            ]
        )
        pred = forward(net, batch)
        loss, dpred = mse_loss(pred, targets[idx])
        net.zero_grad()
        net.backward(dpred[:, None].astype(batch.dtype if batch.ndim else np.float32))
        lr = lr_schedule(it, train_cfg)
        adam_step(net.params(), state, lr)
        log.append(TrainLogRow(it, lr, loss))
    return net, log


def predict(net: Network, img: SliceImage) -> float:
    """Single forward pass on one decoded image."""
    return float(forward(net, decode8(img.data, img.encoding))[0])


def write_train_log(rows: list[TrainLogRow], path) -> None:
    with open(path, "w") as fh:
        fh.write("iteration,lr,loss\n")
        for r in rows:
            fh.write(f"{r.iteration},{r.lr:.10g},{r.loss:.10g}\n")


@dataclass
class CVPlan:
    k: int
    folds: list[list[str]]
    seed: int

    def __post_init__(self):
        sizes = [len(f) for f in self.folds]
        if max(sizes) - min(sizes) > 1:
            raise ValueError("fold sizes must differ by at most 1")
        flat = [i for f in self.folds for i in f]
        if len(flat) != len(set(flat)):
            raise ValueError("folds must be disjoint")


def make_cv_plan(ids, k: int = 10, seed: int = 0) -> CVPlan:
    """Partition subject ids into k near-equal folds, seeded shuffle."""
    ids = sorted(str(i) for i in ids)
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate subject ids")
    if k < 2 or k > len(ids):
        raise ValueError(f"k must be in [2, {len(ids)}], got {k}")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(13,)))
    perm = [ids[i] for i in rng.permutation(len(ids))]
    base, extra = divmod(len(ids), k)
    folds, at = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        folds.append(perm[at : at + size])
        at += size
    return CVPlan(k=k, folds=folds, seed=seed)


# Checkpoint format: magic FFN1, u32 spec-string length, spec string
# (network config text plus input dims and dtype), then per parameter a
# u32 rank, u32 dims, and a little-endian f32 blob.

CHECKPOINT_MAGIC = b"FFN1"


def save_model(net: Network, path) -> None:
    cfg = net.config
    header = f"{cfg.to_text()}|{cfg.in_height}|{cfg.in_width}|{cfg.dtype}".encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", len(header)))
        fh.write(header)
        params = net.params()
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            fh.write(struct.pack("<I", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            fh.write(p.data.astype("<f4").tobytes())


def load_model(path) -> Network:
    raw = Path(path).read_bytes()
    if raw[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic")
    off = 4
    (hlen,) = struct.unpack_from("<I", raw, off)
    off += 4
    text, in_h, in_w, dtype = raw[off : off + hlen].decode().split("|")
    off += hlen
    cfg = NetworkConfig.parse(text, int(in_h), int(in_w), dtype)
    net = build_network(cfg, seed=0)
    (n_params,) = struct.unpack_from("<I", raw, off)
    off += 4
    params = net.params()
    if n_params != len(params):
        raise ValueError(f"{path}: parameter count mismatch")
    for p in params:
        (rank,) = struct.unpack_from("<I", raw, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", raw, off)
        off += 4 * rank
        if shape != p.data.shape:
            raise ValueError(f"{path}: parameter shape mismatch {shape}")
        count = int(np.prod(shape))
        blob = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
        off += 4 * count
        p.data[...] = blob.reshape(shape).astype(p.data.dtype)
    return net
