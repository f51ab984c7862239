"""Label smoothing and the weakly supervised / modality-guided BCE losses."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .errors import ConfigError
from .tensor import Tensor

PROB_EPS = 1e-7


class SmoothingMode(enum.Enum):
    NO_LS = "NoLS"
    LS_A = "LSA"
    LS_V = "LSV"
    LS_AV = "LSAV"

    @classmethod
    def parse(cls, name: str) -> "SmoothingMode":
        for m in cls:
            if m.value.lower() == name.lower().replace("-", ""):
                return m
        raise ConfigError(
            f"unknown smoothing mode {name!r}; valid: {', '.join(m.value for m in cls)}"
        )

    @property
    def smooths_audio(self) -> bool:
        return self in (SmoothingMode.LS_A, SmoothingMode.LS_AV)

    @property
    def smooths_visual(self) -> bool:
        return self in (SmoothingMode.LS_V, SmoothingMode.LS_AV)


@dataclass(frozen=True)
class SmoothingConfig:
    """Which modalities get smoothed targets, by how much, and toward 1/K.

    ``delta_a``/``delta_v`` are the configured strengths; the effective value
    is zero for a modality the mode leaves alone. ``K=None`` means K = C.
    """

    mode: SmoothingMode = SmoothingMode.LS_V
    delta_a: float = 0.1
    delta_v: float = 0.1
    K: int | None = None
    positive_only: bool = False

    def __post_init__(self):
        for name in ("delta_a", "delta_v"):
            d = getattr(self, name)
            if not 0.0 <= d < 1.0:
                raise ConfigError(f"{name} must lie in [0, 1), got {d}")
        if self.K is not None and self.K <= 1:
            raise ConfigError(f"K must exceed 1, got {self.K}")

    @property
    def effective_delta_a(self) -> float:
        return self.delta_a if self.mode.smooths_audio else 0.0

    @property
    def effective_delta_v(self) -> float:
        return self.delta_v if self.mode.smooths_visual else 0.0

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "delta_a": self.delta_a,
            "delta_v": self.delta_v,
            "K": self.K,
            "positive_only": self.positive_only,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SmoothingConfig":
        return cls(
            mode=SmoothingMode.parse(d["mode"]),
            delta_a=float(d["delta_a"]),
            delta_v=float(d["delta_v"]),
            K=d.get("K"),
            positive_only=bool(d.get("positive_only", False)),
        )


def smooth_labels(y: np.ndarray, cfg: SmoothingConfig) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    K = cfg.K if cfg.K is not None else y.shape[-1]
    out = []
    for delta in (cfg.effective_delta_a, cfg.effective_delta_v):
        out.append(y.copy() if delta == 0.0 else (1.0 - delta) * y + delta / K)
    return out[0], out[1]


def bce(p: Tensor, y: np.ndarray, positive_only: bool = False) -> Tensor:
    """Binary cross-entropy summed over classes, averaged over any leading batch axis.

    ``p`` is clamped to [1e-7, 1 - 1e-7] before the logarithms.
    """
    y = np.asarray(y, dtype=np.float64)
    pc = tn.clamp(p, PROB_EPS, 1.0 - PROB_EPS)
    terms = tn.mul(tn.log(pc), Tensor(y))
    if not positive_only:
        neg = tn.log(tn.add(tn.scale(pc, -1.0), Tensor(1.0)))
        terms = tn.add(terms, tn.mul(neg, Tensor(1.0 - y)))
    per_video = tn.scale(tn.sum_along_axis(terms, axis=-1), -1.0)
    if per_video.ndim == 0:
        return per_video
    return tn.mean_along_axis(per_video, axis=0)


@dataclass
class LossBreakdown:
    l_wsl: Tensor
    l_a: Tensor
    l_v: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {
            "l_wsl": self.l_wsl.item(),
            "l_a": self.l_a.item(),
            "l_v": self.l_v.item(),
            "total": self.total.item(),
        }


def total_loss(
    p_wsl: Tensor, p_a: Tensor, p_v: Tensor, y: np.ndarray, cfg: SmoothingConfig
) -> LossBreakdown:
    y_a, y_v = smooth_labels(y, cfg)
    l_wsl = bce(p_wsl, y, cfg.positive_only)
    l_a = bce(p_a, y_a, cfg.positive_only)
    l_v = bce(p_v, y_v, cfg.positive_only)
    return LossBreakdown(l_wsl, l_a, l_v, tn.add(tn.add(l_wsl, l_a), l_v))
