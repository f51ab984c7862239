"""Post-hoc analyses: class-wise modality attention mass and loss-curve mirroring."""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .model import Prediction
from .train import LossCurves, curve_mse


def attention_by_class(preds: Mapping[str, Prediction]) -> tuple[np.ndarray, np.ndarray]:
    """Mean W_av mass on audio and on visual per class, over videos and segments."""
    if not preds:
        raise ValueError("no predictions to aggregate")
    stacked = np.concatenate([p.w_av for p in preds.values()], axis=0)  # (sum T, 2, C)
    means = stacked.mean(axis=0)
    return means[0], means[1]


def mean_audio_mass(preds: Mapping[str, Prediction]) -> float:
    """Average of W_av[t, audio, c] over all test videos, segments and classes."""
    return float(np.mean([p.w_av[:, 0, :].mean() for p in preds.values()]))


def loss_mirroring(curves: LossCurves) -> dict[str, float | str]:
    """MSE between the weakly supervised curve and each modality curve.

    ``ratio`` = MSE(wsl, visual) / MSE(wsl, audio); large values mean the video-level
    loss follows the audio loss. Zero denominators give ``"inf"`` or, when both
    are zero, ``"indeterminate"``.
    """
    mse_a = curve_mse(curves.l_wsl, curves.l_a)
    mse_v = curve_mse(curves.l_wsl, curves.l_v)
    if mse_a > 0:
        ratio: float | str = mse_v / mse_a
    elif mse_v > 0:
        ratio = "inf"
    else:
        ratio = "indeterminate"
    return {"mse_wsl_a": mse_a, "mse_wsl_v": mse_v, "ratio": ratio}


def averaged_variance(scores_by_mode: Mapping[str, Mapping[str, float]],
                      families=("audio", "visual", "audio_visual")) -> float:
    """Variance of each family's F-score across smoothing modes, averaged over families."""
    per_family = []
    for fam in families:
        vals = [s[fam] for s in scores_by_mode.values()]
        per_family.append(float(np.var(vals)))
    return float(np.mean(per_family))
