"""Adam training loop, step-decay schedule, loss curves and checkpoints."""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import tensor as tn
from .data import VideoRecord
from .errors import ContractError, DataError
from .han import BASELINE, HanVariant
from .model import ModelParams, forward
from .objectives import SmoothingConfig, total_loss
from .tensor import Tensor

log = logging.getLogger(__name__)

CURVE_KEYS = ("l_wsl", "l_a", "l_v", "total")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 40
    batch_size: int = 16
    lr0: float = 3e-4
    lr_decay_every: int = 10
    lr_decay_factor: float = 0.1
    seed: int = 0
    variant: HanVariant = BASELINE
    smoothing: SmoothingConfig = field(default_factory=SmoothingConfig)
    model_dim: int = 64

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "lr0": self.lr0,
            "lr_decay_every": self.lr_decay_every,
            "lr_decay_factor": self.lr_decay_factor,
            "seed": self.seed,
            "variant": self.variant.name,
            "smoothing": self.smoothing.to_dict(),
            "model_dim": self.model_dim,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(
            epochs=int(d["epochs"]),
            batch_size=int(d["batch_size"]),
            lr0=float(d["lr0"]),
            lr_decay_every=int(d["lr_decay_every"]),
            lr_decay_factor=float(d["lr_decay_factor"]),
            seed=int(d["seed"]),
            variant=HanVariant.parse(d["variant"]),
            smoothing=SmoothingConfig.from_dict(d["smoothing"]),
            model_dim=int(d["model_dim"]),
        )


def lr_at_epoch(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ContractError(f"epoch must be >= 0, got {epoch}")
    return cfg.lr0 * cfg.lr_decay_factor ** (epoch // cfg.lr_decay_every)


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update; returns new arrays and a new state."""
    step = state.step + 1
    new_p, new_m, new_v = [], [], []
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + eps))
        new_m.append(m)
        new_v.append(v)
    return new_p, AdamState(new_m, new_v, step)


@dataclass
class LossCurves:
    l_wsl: list[float] = field(default_factory=list)
    l_a: list[float] = field(default_factory=list)
    l_v: list[float] = field(default_factory=list)
    total: list[float] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.total)

    def append(self, row: dict[str, float]) -> None:
        for k in CURVE_KEYS:
            getattr(self, k).append(row[k])

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", *CURVE_KEYS])
            for e in range(len(self)):
                w.writerow([e + 1, *(repr(getattr(self, k)[e]) for k in CURVE_KEYS)])

    @classmethod
    def read_csv(cls, path: str | os.PathLike) -> "LossCurves":
        curves = cls()
        try:
            fh = open(path, newline="")
        except FileNotFoundError:
            raise DataError("curve file not found", path=str(path)) from None
        with fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or [h.strip() for h in header[1:5]] != list(CURVE_KEYS):
                raise DataError(f"line 1: expected header epoch,{','.join(CURVE_KEYS)}", path=str(path))
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    if len(row) != 5:
                        raise ValueError(f"expected 5 fields, got {len(row)}")
                    values = [float(x) for x in row[1:]]
                except ValueError as exc:
                    raise DataError(f"line {lineno}: {exc}", path=str(path)) from None
                curves.append(dict(zip(CURVE_KEYS, values)))
        return curves


def curve_mse(c1: Sequence[float], c2: Sequence[float]) -> float:
    if len(c1) != len(c2):
        raise ContractError(f"curves differ in length: {len(c1)} vs {len(c2)}")
    if len(c1) == 0:
        raise ContractError("curves are empty")
    d = np.asarray(c1, dtype=np.float64) - np.asarray(c2, dtype=np.float64)
    return float(np.mean(d * d))


def collate(records: Sequence[VideoRecord]) -> tuple[Tensor, Tensor, np.ndarray]:
    lengths = {r.T for r in records}
    if len(lengths) != 1:
        raise DataError(f"videos in one batch must share T, got lengths {sorted(lengths)}")
    audio = Tensor(np.stack([r.audio for r in records]))
    visual = Tensor(np.stack([r.visual for r in records]))
    labels = np.stack([r.label for r in records]).astype(np.float64)
    return audio, visual, labels


def batch_loss(params: ModelParams, records: Sequence[VideoRecord], cfg: TrainConfig):
    audio, visual, labels = collate(records)
    out = forward(params, audio, visual, cfg.variant)
    return total_loss(out.p_wsl, out.p_a, out.p_v, labels, cfg.smoothing)


def fit(
    records: Sequence[VideoRecord],
    cfg: TrainConfig,
    on_epoch: Callable[[int, dict[str, float], ModelParams], None] | None = None,
) -> tuple[ModelParams, LossCurves]:
    """Train from a seeded initialization; fully deterministic given ``cfg.seed``.

    ``on_epoch(epoch, mean_losses, params)`` sees a snapshot after every epoch;
    parameter tensors are immutable so the snapshot stays valid.
    """
    if not records:
        raise DataError("cannot train on an empty dataset")
    first = records[0]
    params = ModelParams.init(
        first.audio.shape[1], first.visual.shape[1], cfg.model_dim, first.label.size, cfg.seed
    )
    names = list(params.named())
    state = AdamState.zeros_like([t.data for t in params.tensors()])
    curves = LossCurves()
    n = len(records)
    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(epoch, cfg)
        order = np.random.default_rng([cfg.seed, epoch]).permutation(n)
        sums = dict.fromkeys(CURVE_KEYS, 0.0)
        for start in range(0, n, cfg.batch_size):
            batch = [records[i] for i in order[start:start + cfg.batch_size]]
            tensors = params.tensors()
            losses = batch_loss(params, batch, cfg)
            grads = tn.backward(losses.total, tensors)
            new, state = adam_step([t.data for t in tensors], grads, state, lr)
            params = ModelParams.from_arrays(dict(zip(names, new)))
            for k, v in losses.values().items():
                sums[k] += v * len(batch)
        row = {k: v / n for k, v in sums.items()}
        if not all(math.isfinite(v) for v in row.values()):
            raise ContractError(f"non-finite loss at epoch {epoch + 1}: {row}")
        curves.append(row)
        log.debug("epoch %d lr=%.2e %s", epoch + 1, lr, row)
        if on_epoch is not None:
            on_epoch(epoch, row, params)
    return params, curves


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

CKPT_MAGIC = b"AVCK"
CKPT_VERSION = 1


def save_checkpoint(path: str | os.PathLike, params: ModelParams, meta: dict) -> None:
    """Binary checkpoint: header, JSON metadata, then named little-endian float64 arrays."""
    meta_bytes = json.dumps(meta, sort_keys=True).encode()
    arrays = params.arrays()
    with open(path, "wb") as fh:
        fh.write(struct.pack("<4sII", CKPT_MAGIC, CKPT_VERSION, len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            nb = name.encode()
            fh.write(struct.pack("<II", len(nb), arr.ndim))
            fh.write(nb)
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[ModelParams, dict]:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError("checkpoint not found", path=str(path)) from None
    try:
        magic, version, meta_len = struct.unpack_from("<4sII", raw, 0)
        if magic != CKPT_MAGIC:
            raise DataError(f"bad checkpoint magic {magic!r}", path=str(path))
        if version != CKPT_VERSION:
            raise DataError(f"unsupported checkpoint version {version}", path=str(path))
        off = 12
        meta = json.loads(raw[off:off + meta_len])
        off += meta_len
        (count,) = struct.unpack_from("<I", raw, off)
        off += 4
        arrays = {}
        for _ in range(count):
            name_len, ndim = struct.unpack_from("<II", raw, off)
            off += 8
            name = raw[off:off + name_len].decode()
            off += name_len
            shape = struct.unpack_from(f"<{ndim}I", raw, off)
            off += 4 * ndim
            size = int(np.prod(shape)) if ndim else 1
            arrays[name] = np.frombuffer(raw, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
            off += 8 * size
    except (struct.error, ValueError) as exc:
        raise DataError(f"corrupt checkpoint: {exc}", path=str(path)) from None
    return ModelParams.from_arrays(arrays), meta
