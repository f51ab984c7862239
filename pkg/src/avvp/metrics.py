"""Segment- and event-level F-scores for audio, visual and audio-visual events.

Conventions (the original evaluation script is not available):

* counts are micro-averaged over every video and class;
* F = 2TP / (2TP + FP + FN), and F = 1 when the pooled set is empty on both sides;
* an audio-visual positive is the AND of the audio and visual grids;
* event-level matching is one-to-one, greedy in descending IoU, within one
  video and class, and a pair counts when IoU >= threshold.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DimensionError

LEVELS = ("segment", "event")
FAMILIES = ("audio", "visual", "audio_visual", "ty_at_av", "ev_at_av")


@dataclass(frozen=True)
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def __add__(self, other: "Counts") -> "Counts":
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 1.0 if denom == 0 else 2 * self.tp / denom


@dataclass(frozen=True)
class EventSpan:
    cls: int
    start: int
    end: int  # inclusive

    @property
    def length(self) -> int:
        return self.end - self.start + 1


def binarize(P: np.ndarray, threshold: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Split a (T, 2, C) probability cube into audio and visual 0/1 grids."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0, 1), got {threshold}")
    hits = (np.asarray(P) >= threshold).astype(np.int8)
    return hits[..., 0, :], hits[..., 1, :]


def av_combine(audio: np.ndarray, visual: np.ndarray) -> np.ndarray:
    if audio.shape != visual.shape:
        raise DimensionError(f"grids differ in shape: {audio.shape} vs {visual.shape}")
    return (audio.astype(bool) & visual.astype(bool)).astype(np.int8)


def segment_counts(pred: np.ndarray, gt: np.ndarray) -> Counts:
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    p, g = pred.astype(bool), gt.astype(bool)
    return Counts(int(np.sum(p & g)), int(np.sum(p & ~g)), int(np.sum(~p & g)))


def segment_f1(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray]) -> float:
    total = Counts()
    for p, g in zip(preds, gts, strict=True):
        total += segment_counts(p, g)
    return total.f1


def extract_events(grid: np.ndarray) -> list[EventSpan]:
    """Maximal runs of positives per class, ordered by (class, start)."""
    grid = np.asarray(grid).astype(bool)
    spans = []
    for c in range(grid.shape[1]):
        col = np.concatenate([[False], grid[:, c], [False]]).astype(np.int8)
        edges = np.diff(col)
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1) - 1
        spans.extend(EventSpan(c, int(s), int(e)) for s, e in zip(starts, ends))
    return spans


def rasterize(spans: Sequence[EventSpan], T: int, C: int) -> np.ndarray:
    grid = np.zeros((T, C), dtype=np.int8)
    for s in spans:
        grid[s.start:s.end + 1, s.cls] = 1
    return grid


def span_iou(a: EventSpan, b: EventSpan) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start) + 1
    if inter <= 0:
        return 0.0
    return inter / (a.length + b.length - inter)


def match_spans(pred: Sequence[EventSpan], gt: Sequence[EventSpan], threshold: float) -> Counts:
    """Greedy one-to-one matching in descending IoU (ties: earlier pred, then gt)."""
    pairs = []
    for i, p in enumerate(pred):
        for j, g in enumerate(gt):
            iou = span_iou(p, g)
            if iou >= threshold:
                pairs.append((-iou, i, j))
    pairs.sort()
    used_p, used_g = set(), set()
    for _, i, j in pairs:
        if i not in used_p and j not in used_g:
            used_p.add(i)
            used_g.add(j)
    tp = len(used_p)
    return Counts(tp, len(pred) - tp, len(gt) - tp)


def event_counts(pred: np.ndarray, gt: np.ndarray, threshold: float = 0.5) -> Counts:
    if pred.shape != gt.shape:
        raise DimensionError(f"prediction {pred.shape} and ground truth {gt.shape} differ")
    total = Counts()
    pe, ge = extract_events(pred), extract_events(gt)
    for c in range(pred.shape[1]):
        total += match_spans([s for s in pe if s.cls == c], [s for s in ge if s.cls == c], threshold)
    return total


def event_f1(preds: Sequence[np.ndarray], gts: Sequence[np.ndarray], miou_threshold: float = 0.5) -> float:
    if not 0.0 < miou_threshold <= 1.0:
        raise ValueError(f"threshold must be in (0, 1], got {miou_threshold}")
    total = Counts()
    for p, g in zip(preds, gts, strict=True):
        total += event_counts(p, g, miou_threshold)
    return total.f1


def ty_at_av(audio_f: float, visual_f: float, av_f: float) -> float:
    return (audio_f + visual_f + av_f) / 3.0


def ev_at_av(
    pred_audio: Sequence[np.ndarray],
    pred_visual: Sequence[np.ndarray],
    gt_audio: Sequence[np.ndarray],
    gt_visual: Sequence[np.ndarray],
    level: str = "segment",
    miou_threshold: float = 0.5,
) -> float:
    """One F-score over the pooled, modality-tagged audio and visual instances."""
    if level == "segment":
        def count(p, g):
            return segment_counts(p, g)
    elif level == "event":
        def count(p, g):
            return event_counts(p, g, miou_threshold)
    else:
        raise ValueError(f"level must be 'segment' or 'event', got {level!r}")
    total = Counts()
    for pa, pv, ga, gv in zip(pred_audio, pred_visual, gt_audio, gt_visual, strict=True):
        total += count(pa, ga) + count(pv, gv)
    return total.f1


@dataclass
class EvalReport:
    segment: dict[str, float]
    event: dict[str, float]

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_table(self, title: str = "") -> str:
        names = {
            "audio": "Audio",
            "visual": "Visual",
            "audio_visual": "Audio-Visual",
            "ty_at_av": "Type@AV",
            "ev_at_av": "Event@AV",
        }
        lines = []
        if title:
            lines.append(title)
        lines.append(f"{'Event type':<14}{'Segment':>10}{'Event':>10}")
        lines.append("-" * 34)
        for fam in FAMILIES:
            lines.append(f"{names[fam]:<14}{100 * self.segment[fam]:>10.1f}{100 * self.event[fam]:>10.1f}")
        return "\n".join(lines) + "\n"


def evaluate_grids(
    pred_audio: Sequence[np.ndarray],
    pred_visual: Sequence[np.ndarray],
    gt_audio: Sequence[np.ndarray],
    gt_visual: Sequence[np.ndarray],
    miou_threshold: float = 0.5,
) -> EvalReport:
    pred_av = [av_combine(a, v) for a, v in zip(pred_audio, pred_visual)]
    gt_av = [av_combine(a, v) for a, v in zip(gt_audio, gt_visual)]
    out = {}
    for level in LEVELS:
        if level == "segment":
            def f(p, g):
                return segment_f1(p, g)
        else:
            def f(p, g):
                return event_f1(p, g, miou_threshold)
        scores = {
            "audio": f(pred_audio, gt_audio),
            "visual": f(pred_visual, gt_visual),
            "audio_visual": f(pred_av, gt_av),
        }
        scores["ty_at_av"] = ty_at_av(scores["audio"], scores["visual"], scores["audio_visual"])
        scores["ev_at_av"] = ev_at_av(pred_audio, pred_visual, gt_audio, gt_visual, level, miou_threshold)
        out[level] = scores
    return EvalReport(segment=out["segment"], event=out["event"])


def evaluate(
    probs: dict[str, np.ndarray],
    annotations: dict[str, tuple[np.ndarray, np.ndarray] | None],
    threshold: float = 0.5,
    miou_threshold: float = 0.5,
) -> EvalReport:
    """Score per-video (T, 2, C) probability cubes against segment annotations.

    Both mappings are keyed by video id; videos are processed in sorted id order.
    """
    missing = sorted(vid for vid in probs if annotations.get(vid) is None)
    if missing:
        shown = ", ".join(missing[:10]) + (" ..." if len(missing) > 10 else "")
        raise DataError(f"evaluation needs segment annotations; missing for {len(missing)} videos: {shown}")
    pa, pv, ga, gv = [], [], [], []
    for vid in sorted(probs):
        a, v = binarize(probs[vid], threshold)
        pa.append(a)
        pv.append(v)
        ga.append(annotations[vid][0])
        gv.append(annotations[vid][1])
    return evaluate_grids(pa, pv, ga, gv, miou_threshold)
