"""Full forward pass: projection -> HAN aggregation -> MMIL pooling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import han, mmil
from .han import HanParams, HanVariant
from .mmil import AttentionTensors, MmilParams
from .tensor import Tensor


@dataclass
class ModelParams:
    han: HanParams
    mmil: MmilParams

    @classmethod
    def init(cls, d_a: int, d_v: int, d: int, num_classes: int, seed: int) -> "ModelParams":
        rng = np.random.default_rng(seed)
        return cls(HanParams.init(d_a, d_v, d, rng), MmilParams.init(d, num_classes, rng))

    def named(self) -> dict[str, Tensor]:
        return {**self.han.named(), **self.mmil.named()}

    def tensors(self) -> list[Tensor]:
        return list(self.named().values())

    @property
    def num_classes(self) -> int:
        return self.mmil.cls_w.shape[1]

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "ModelParams":
        t = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        return cls(
            HanParams(t["han.audio_w"], t["han.audio_b"], t["han.visual_w"], t["han.visual_b"]),
            MmilParams(
                t["mmil.cls_w"], t["mmil.cls_b"], t["mmil.tp_w"], t["mmil.av_w"],
            ),
        )

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.named().items()}


@dataclass
class ModelOutput:
    P: Tensor  # (..., T, 2, C)
    attention: AttentionTensors
    p_wsl: Tensor  # (..., C)
    p_a: Tensor
    p_v: Tensor


def forward(params: ModelParams, audio: Tensor, visual: Tensor, variant: HanVariant) -> ModelOutput:
    """``audio``: (..., T, d_a); ``visual``: (..., T, d_v)."""
    f_a, f_v = han.project(audio, visual, params.han)
    agg = han.aggregate(f_a, f_v, variant)
    P = mmil.segment_probs(agg, params.mmil)
    att = mmil.attention_tensors(agg, params.mmil)
    return ModelOutput(
        P=P,
        attention=att,
        p_wsl=mmil.pool_video(P, att),
        p_a=mmil.pool_modality(P, att.w_tp, mmil.AUDIO),
        p_v=mmil.pool_modality(P, att.w_tp, mmil.VISUAL),
    )


@dataclass
class Prediction:
    P: np.ndarray  # (T, 2, C)
    w_tp: np.ndarray
    w_av: np.ndarray
    p_wsl: np.ndarray  # (C,)


def predict(params: ModelParams, records, variant: HanVariant, batch_size: int = 64) -> dict[str, Prediction]:
    """Forward pass over ``records`` in fixed order; returns numpy outputs keyed by video id."""
    out: dict[str, Prediction] = {}
    records = list(records)
    for start in range(0, len(records), batch_size):
        batch = records[start:start + batch_size]
        audio = Tensor(np.stack([r.audio for r in batch]))
        visual = Tensor(np.stack([r.visual for r in batch]))
        res = forward(params, audio, visual, variant)
        for i, rec in enumerate(batch):
            out[rec.id] = Prediction(
                P=res.P.data[i],
                w_tp=res.attention.w_tp.data[i],
                w_av=res.attention.w_av.data[i],
                p_wsl=res.p_wsl.data[i],
            )
    return out
