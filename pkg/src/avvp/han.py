"""Hybrid attention feature aggregation.

Each modality's aggregated feature at time t is the residual input plus
scaled dot-product self-attention over its own sequence, plus (optionally)
cross-attention over the other modality's sequence. The four on/off
combinations of the cross term give the variant grid.

Attention is parameter-free: ``softmax(q K^T / sqrt(d)) K``. The only learned
weights here are the affine projections bringing both modalities to a common
width ``d``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ConfigError, DimensionError
from .tensor import Tensor


class Mode(enum.Enum):
    SELF_ONLY = "self"
    SELF_PLUS_CROSS = "cross"


@dataclass(frozen=True)
class HanVariant:
    audio_mode: Mode
    visual_mode: Mode

    @property
    def name(self) -> str:
        return f"A{self.audio_mode.value}V{self.visual_mode.value}"

    @classmethod
    def parse(cls, name: str) -> "HanVariant":
        try:
            return VARIANTS[name]
        except KeyError:
            raise ConfigError(
                f"unknown variant {name!r}; valid: {', '.join(VARIANTS)}"
            ) from None

    def __str__(self) -> str:
        return self.name


VARIANTS = {
    v.name: v
    for v in (
        HanVariant(Mode.SELF_PLUS_CROSS, Mode.SELF_PLUS_CROSS),
        HanVariant(Mode.SELF_PLUS_CROSS, Mode.SELF_ONLY),
        HanVariant(Mode.SELF_ONLY, Mode.SELF_PLUS_CROSS),
        HanVariant(Mode.SELF_ONLY, Mode.SELF_ONLY),
    )
}
BASELINE = VARIANTS["AcrossVcross"]


@dataclass
class HanParams:
    audio_w: Tensor  # (d_a, d)
    audio_b: Tensor  # (d,)
    visual_w: Tensor  # (d_v, d)
    visual_b: Tensor  # (d,)

    @property
    def model_dim(self) -> int:
        return self.audio_w.shape[1]

    def __post_init__(self):
        if self.audio_w.shape[1] != self.visual_w.shape[1]:
            raise DimensionError(
                f"projections must share output width: {self.audio_w.shape} vs {self.visual_w.shape}"
            )

    @classmethod
    def init(cls, d_a: int, d_v: int, d: int, rng: np.random.Generator) -> "HanParams":
        return cls(
            audio_w=_uniform(rng, (d_a, d), d_a),
            audio_b=_uniform(rng, (d,), d_a),
            visual_w=_uniform(rng, (d_v, d), d_v),
            visual_b=_uniform(rng, (d,), d_v),
        )

    def named(self) -> dict[str, Tensor]:
        return {
            "han.audio_w": self.audio_w,
            "han.audio_b": self.audio_b,
            "han.visual_w": self.visual_w,
            "han.visual_b": self.visual_b,
        }


def _uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> Tensor:
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


@dataclass
class AggregatedFeatures:
    audio: Tensor  # (..., T, d)
    visual: Tensor  # (..., T, d)


def project(f_a: Tensor, f_v: Tensor, params: HanParams) -> tuple[Tensor, Tensor]:
    if f_a.shape[-1] != params.audio_w.shape[0]:
        raise DimensionError(
            f"audio features have width {f_a.shape[-1]}, projection expects {params.audio_w.shape[0]}"
        )
    if f_v.shape[-1] != params.visual_w.shape[0]:
        raise DimensionError(
            f"visual features have width {f_v.shape[-1]}, projection expects {params.visual_w.shape[0]}"
        )
    a = tn.add(tn.matmul(f_a, params.audio_w), params.audio_b)
    v = tn.add(tn.matmul(f_v, params.visual_w), params.visual_b)
    return a, v


def attend(queries: Tensor, keys: Tensor) -> Tensor:
    """Row-wise ``softmax(q K^T / sqrt(d)) K`` for every query row at once.

    ``queries``: (..., Tq, d); ``keys``: (..., Tk, d) with the same leading axes.
    """
    d = queries.shape[-1]
    if keys.shape[-1] != d:
        raise DimensionError(f"attention width mismatch: {queries.shape} vs {keys.shape}")
    scores = tn.scale(tn.matmul(queries, tn.transpose_last(keys)), 1.0 / math.sqrt(d))
    return tn.matmul(tn.softmax(scores, axis=-1), keys)


def self_attend(query: Tensor, seq: Tensor) -> Tensor:
    """Single query vector of shape (d,) against its own modality's (T, d) sequence."""
    return tn.reshape(attend(tn.reshape(query, (1, query.shape[0])), seq), (query.shape[0],))


def cross_attend(query: Tensor, other: Tensor) -> Tensor:
    # Same mechanics as self_attend; the keys/values come from the other modality.
    return self_attend(query, other)


def aggregate(f_a: Tensor, f_v: Tensor, variant: HanVariant) -> AggregatedFeatures:
    if f_a.shape != f_v.shape:
        raise DimensionError(f"projected sequences differ: {f_a.shape} vs {f_v.shape}")
    audio = tn.add(f_a, attend(f_a, f_a))
    if variant.audio_mode is Mode.SELF_PLUS_CROSS:
        audio = tn.add(audio, attend(f_a, f_v))
    visual = tn.add(f_v, attend(f_v, f_v))
    if variant.visual_mode is Mode.SELF_PLUS_CROSS:
        visual = tn.add(visual, attend(f_v, f_a))
    return AggregatedFeatures(audio=audio, visual=visual)
