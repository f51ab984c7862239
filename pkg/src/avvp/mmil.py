"""Attentive multimodal MIL pooling.

Tensors are laid out as ``(..., T, M, C)`` with modality index 0 = audio and
1 = visual, so a batch of videos simply adds a leading axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .han import AggregatedFeatures
from .tensor import Tensor

AUDIO, VISUAL = 0, 1
T_AXIS, M_AXIS = -3, -2


@dataclass
class MmilParams:
    """Classifier, temporal-attention and modality-attention heads.

    Each head is one map d -> C applied to both modalities alike. The two
    attention heads carry no bias: a per-class bias is constant along the
    softmax axis (time for W_tp, modality for W_av) and cancels exactly.
    """

    cls_w: Tensor
    cls_b: Tensor
    tp_w: Tensor
    av_w: Tensor

    @classmethod
    def init(cls, d: int, num_classes: int, rng: np.random.Generator) -> "MmilParams":
        bound = 1.0 / math.sqrt(d)

        def u(shape):
            return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)

        return cls(
            cls_w=u((d, num_classes)),
            cls_b=u((num_classes,)),
            tp_w=u((d, num_classes)),
            av_w=u((d, num_classes)),
        )

    def named(self) -> dict[str, Tensor]:
        return {
            "mmil.cls_w": self.cls_w,
            "mmil.cls_b": self.cls_b,
            "mmil.tp_w": self.tp_w,
            "mmil.av_w": self.av_w,
        }


@dataclass
class AttentionTensors:
    w_tp: Tensor  # softmax over T
    w_av: Tensor  # softmax over M


def _head(agg: AggregatedFeatures, w: Tensor, b: Tensor | None = None) -> Tensor:
    audio, visual = tn.matmul(agg.audio, w), tn.matmul(agg.visual, w)
    if b is not None:
        audio, visual = tn.add(audio, b), tn.add(visual, b)
    return tn.stack([audio, visual], axis=M_AXIS)


def segment_probs(agg: AggregatedFeatures, params: MmilParams) -> Tensor:
    return tn.sigmoid(_head(agg, params.cls_w, params.cls_b))


def attention_logits(agg: AggregatedFeatures, params: MmilParams) -> tuple[Tensor, Tensor]:
    return _head(agg, params.tp_w), _head(agg, params.av_w)


def attention_from_logits(tp_logits: Tensor, av_logits: Tensor) -> AttentionTensors:
    return AttentionTensors(
        w_tp=tn.softmax(tp_logits, axis=T_AXIS),
        w_av=tn.softmax(av_logits, axis=M_AXIS),
    )


def attention_tensors(agg: AggregatedFeatures, params: MmilParams) -> AttentionTensors:
    return attention_from_logits(*attention_logits(agg, params))


def pool_video(P: Tensor, att: AttentionTensors) -> Tensor:
    weighted = tn.mul(tn.mul(att.w_tp, att.w_av), P)
    return tn.sum_along_axis(weighted, axis=(T_AXIS, M_AXIS))


def pool_modality(P: Tensor, w_tp: Tensor, modality: int) -> Tensor:
    if modality not in (AUDIO, VISUAL):
        raise ValueError(f"modality must be 0 (audio) or 1 (visual), got {modality}")
    weighted = tn.take(tn.mul(w_tp, P), modality, axis=M_AXIS)
    return tn.sum_along_axis(weighted, axis=-2)


def decompose(P: Tensor, att: AttentionTensors) -> tuple[Tensor, Tensor]:
    """Per-modality partial sums of the video-level pool; they add up to ``pool_video``."""
    weighted = tn.mul(tn.mul(att.w_tp, att.w_av), P)
    audio = tn.sum_along_axis(tn.take(weighted, AUDIO, axis=M_AXIS), axis=-2)
    visual = tn.sum_along_axis(tn.take(weighted, VISUAL, axis=M_AXIS), axis=-2)
    return audio, visual
