"""Video records, on-disk formats and the synthetic planted-event generator.

Feature file (one per video and modality)::

    b"AVVP" | u32 version | u32 T | u32 d | T*d float32, little-endian, row-major

The manifest is a JSON document listing every video with its feature paths
(relative to the manifest), its video-level label indices, its split and,
for annotated splits, the per-segment audio/visual grids as 0/1 arrays.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError

MAGIC = b"AVVP"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")
MANIFEST_FORMAT = "avvp-manifest"
MANIFEST_VERSION = 1
DEFAULT_SPLIT = (5 / 7, 1 / 7, 1 / 7)  # 200 / 40 / 40 of 280 videos


@dataclass
class VideoRecord:
    id: str
    audio: np.ndarray  # (T, d_a)
    visual: np.ndarray  # (T, d_v)
    label: np.ndarray  # (C,) multi-hot, int8
    segment_gt: tuple[np.ndarray, np.ndarray] | None = None  # (T, C) audio, visual

    @property
    def T(self) -> int:
        return self.audio.shape[0]

    def stripped(self) -> "VideoRecord":
        return VideoRecord(self.id, self.audio, self.visual, self.label, None)

    def check(self, num_classes: int | None = None) -> None:
        if self.audio.shape[0] != self.visual.shape[0]:
            raise DataError(
                f"audio has {self.audio.shape[0]} segments, visual {self.visual.shape[0]}",
                video_id=self.id,
            )
        if num_classes is not None and self.label.shape != (num_classes,):
            raise DataError(f"label length {self.label.shape} != C={num_classes}", video_id=self.id)
        if self.segment_gt is not None:
            a, v = self.segment_gt
            if a.shape != (self.T, self.label.size) or v.shape != a.shape:
                raise DataError(f"segment grids have shapes {a.shape}, {v.shape}", video_id=self.id)
            union = (a.astype(bool) | v.astype(bool)).any(axis=0)
            if not np.array_equal(union, self.label.astype(bool)):
                raise DataError("video label is not the OR of its segment annotations", video_id=self.id)


@dataclass
class Dataset:
    name: str
    class_names: list[str]
    d_a: int
    d_v: int
    records: list[VideoRecord]
    extra: dict = field(default_factory=dict)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __len__(self) -> int:
        return len(self.records)

    def with_records(self, records: list[VideoRecord]) -> "Dataset":
        return Dataset(self.name, self.class_names, self.d_a, self.d_v, records, self.extra)


# ---------------------------------------------------------------------------
# feature files
# ---------------------------------------------------------------------------

def write_features(path: str | os.PathLike, features: np.ndarray) -> None:
    features = np.asarray(features)
    if features.ndim != 2:
        raise DataError(f"features must be 2-D (T, d), got shape {features.shape}", path=str(path))
    T, d = features.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, T, d))
        fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())


def read_features(path: str | os.PathLike) -> np.ndarray:
    try:
        raw = Path(path).read_bytes()
    except FileNotFoundError:
        raise DataError("feature file not found", path=str(path)) from None
    if len(raw) < _HEADER.size:
        raise DataError("truncated header", path=str(path))
    magic, version, T, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise DataError(f"bad magic {magic!r}", path=str(path))
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported format version {version}", path=str(path))
    body = raw[_HEADER.size:]
    if len(body) != 4 * T * d:
        raise DataError(f"expected {T}x{d} float32 payload, found {len(body)} bytes", path=str(path))
    return np.frombuffer(body, dtype="<f4").reshape(T, d).astype(np.float64)


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------

def save_dataset(
    root: str | os.PathLike,
    ds: Dataset,
    splits: dict[str, Sequence[VideoRecord]],
) -> Path:
    """Write features and ``manifest.json`` under ``root``; returns the manifest path."""
    root = Path(root)
    (root / "features").mkdir(parents=True, exist_ok=True)
    videos = []
    for split_name, records in splits.items():
        for rec in records:
            a_rel = f"features/{rec.id}.audio.avvp"
            v_rel = f"features/{rec.id}.visual.avvp"
            write_features(root / a_rel, rec.audio)
            write_features(root / v_rel, rec.visual)
            entry = {
                "id": rec.id,
                "split": split_name,
                "audio": a_rel,
                "visual": v_rel,
                "labels": [int(c) for c in np.flatnonzero(rec.label)],
            }
            if rec.segment_gt is not None:
                entry["segment_gt"] = {
                    "audio": rec.segment_gt[0].astype(int).tolist(),
                    "visual": rec.segment_gt[1].astype(int).tolist(),
                }
            videos.append(entry)
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "name": ds.name,
        "num_classes": ds.num_classes,
        "class_names": ds.class_names,
        "d_a": ds.d_a,
        "d_v": ds.d_v,
        **ds.extra,
        "videos": videos,
    }
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def load(manifest_path: str | os.PathLike, split: str | None = None) -> Dataset:
    """Load every video (or only one split) listed in a manifest."""
    manifest_path = Path(manifest_path)
    try:
        meta = json.loads(manifest_path.read_text())
    except FileNotFoundError:
        raise DataError("manifest not found", path=str(manifest_path)) from None
    except json.JSONDecodeError as exc:
        raise DataError(f"manifest is not valid JSON: {exc}", path=str(manifest_path)) from None
    for key in ("num_classes", "class_names", "d_a", "d_v", "videos"):
        if key not in meta:
            raise DataError(f"manifest lacks {key!r}", path=str(manifest_path))
    C = int(meta["num_classes"])
    if len(meta["class_names"]) != C:
        raise DataError(
            f"class_names has {len(meta['class_names'])} entries, num_classes={C}",
            path=str(manifest_path),
        )
    base = manifest_path.parent
    records = []
    for entry in meta["videos"]:
        if split is not None and entry.get("split") != split:
            continue
        vid = str(entry["id"])
        audio = read_features(base / entry["audio"])
        visual = read_features(base / entry["visual"])
        if audio.shape[1] != meta["d_a"]:
            raise DataError(f"audio width {audio.shape[1]} != d_a={meta['d_a']}", video_id=vid)
        if visual.shape[1] != meta["d_v"]:
            raise DataError(f"visual width {visual.shape[1]} != d_v={meta['d_v']}", video_id=vid)
        label = np.zeros(C, dtype=np.int8)
        for c in entry["labels"]:
            if not 0 <= int(c) < C:
                raise DataError(f"label index {c} outside [0, {C})", video_id=vid)
            label[int(c)] = 1
        gt = None
        if "segment_gt" in entry:
            gt = (
                np.asarray(entry["segment_gt"]["audio"], dtype=np.int8),
                np.asarray(entry["segment_gt"]["visual"], dtype=np.int8),
            )
        rec = VideoRecord(vid, audio, visual, label, gt)
        rec.check(C)
        records.append(rec)
    extra = {k: v for k, v in meta.items() if k not in
             ("format", "version", "name", "num_classes", "class_names", "d_a", "d_v", "videos")}
    return Dataset(meta.get("name", manifest_path.parent.name), list(meta["class_names"]),
                   int(meta["d_a"]), int(meta["d_v"]), records, extra)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SynthConfig:
    """Planted-event generator settings.

    Each video gets 1..max_events distinct classes; each event is audio-only,
    visual-only or audio-visual with the given probabilities and covers one
    contiguous interval of segments.
    """

    num_videos: int = 280
    T: int = 10
    num_classes: int = 8
    d_a: int = 16
    d_v: int = 16
    signal_scale: float = 1.0
    noise: float = 0.5
    p_audio_only: float = 0.35
    p_visual_only: float = 0.15
    p_audio_visual: float = 0.5
    max_events: int = 3
    audio_confusion: float = 0.0
    seed: int = 0

    def __post_init__(self):
        probs = (self.p_audio_only, self.p_visual_only, self.p_audio_visual)
        if any(p < 0 for p in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise ConfigError(f"event-type probabilities must be >= 0 and sum to 1, got {probs}")
        if self.noise < 0:
            raise ConfigError(f"noise must be >= 0, got {self.noise}")
        if self.num_videos < 1 or self.T < 1 or self.num_classes < 1:
            raise ConfigError("num_videos, T and num_classes must be positive")
        if not 0.0 <= self.audio_confusion < 1.0:
            raise ConfigError(f"audio_confusion must be in [0, 1), got {self.audio_confusion}")
        if not 1 <= self.max_events <= self.num_classes:
            raise ConfigError(f"max_events must be in [1, num_classes], got {self.max_events}")

    def to_dict(self) -> dict:
        return asdict(self)


EVENT_TYPES = ("audio", "visual", "audio_visual")


def _f32(x: np.ndarray) -> np.ndarray:
    # Round to float32 so the on-disk format round-trips bit-exactly.
    return x.astype(np.float32).astype(np.float64)


def synth_generate(cfg: SynthConfig) -> Dataset:
    rng = np.random.default_rng(cfg.seed)
    C, T = cfg.num_classes, cfg.T
    sig_a = rng.standard_normal((C, cfg.d_a))
    if cfg.audio_confusion > 0:
        # classes (0,1), (2,3), ... share an audio component: cosine ~ audio_confusion
        shared = rng.standard_normal(((C + 1) // 2, cfg.d_a))[np.arange(C) // 2]
        rho = cfg.audio_confusion
        sig_a = np.sqrt(1.0 - rho) * sig_a + np.sqrt(rho) * shared
    sig_a = _f32(sig_a * cfg.signal_scale)
    sig_v = _f32(rng.standard_normal((C, cfg.d_v)) * cfg.signal_scale)
    probs = [cfg.p_audio_only, cfg.p_visual_only, cfg.p_audio_visual]
    width = len(str(cfg.num_videos - 1))
    records = []
    events_log = []
    for i in range(cfg.num_videos):
        audio = rng.standard_normal((T, cfg.d_a)) * cfg.noise
        visual = rng.standard_normal((T, cfg.d_v)) * cfg.noise
        gt_a = np.zeros((T, C), dtype=np.int8)
        gt_v = np.zeros((T, C), dtype=np.int8)
        n_events = int(rng.integers(1, cfg.max_events + 1))
        classes = rng.choice(C, size=n_events, replace=False)
        for c in classes:
            kind = EVENT_TYPES[int(rng.choice(3, p=probs))]
            length = int(rng.integers(1, T + 1))
            start = int(rng.integers(0, T - length + 1))
            span = slice(start, start + length)
            if kind in ("audio", "audio_visual"):
                audio[span] += sig_a[c]
                gt_a[span, c] = 1
            if kind in ("visual", "audio_visual"):
                visual[span] += sig_v[c]
                gt_v[span, c] = 1
            events_log.append(kind)
        label = (gt_a.astype(bool) | gt_v.astype(bool)).any(axis=0).astype(np.int8)
        records.append(VideoRecord(f"syn{i:0{width}d}", _f32(audio), _f32(visual), label, (gt_a, gt_v)))
    extra = {
        "synth_config": cfg.to_dict(),
        "class_signals": {"audio": sig_a.tolist(), "visual": sig_v.tolist()},
        "event_type_counts": {k: events_log.count(k) for k in EVENT_TYPES},
    }
    return Dataset(f"synthetic-seed{cfg.seed}", [f"class_{c}" for c in range(C)],
                   cfg.d_a, cfg.d_v, records, extra)


def split(
    records: Sequence[VideoRecord],
    fractions: Iterable[float] = DEFAULT_SPLIT,
    seed: int = 0,
) -> tuple[list[VideoRecord], list[VideoRecord], list[VideoRecord]]:
    """Seeded disjoint train/val/test split; train loses its segment annotations."""
    fr = [float(f) for f in fractions]
    if len(fr) != 3 or any(f < 0 for f in fr) or abs(sum(fr) - 1.0) > 1e-9:
        raise ConfigError(f"split fractions must be three non-negative numbers summing to 1, got {fr}")
    n = len(records)
    n_val = int(round(n * fr[1]))
    n_test = int(round(n * fr[2]))
    n_train = n - n_val - n_test
    if n_train < 0:
        raise ConfigError(f"fractions {fr} leave no room for a train split of {n} videos")
    order = np.random.default_rng(seed).permutation(n)
    picked = [records[i] for i in order]
    train = [r.stripped() for r in picked[:n_train]]
    val = picked[n_train:n_train + n_val]
    test = picked[n_train + n_val:]
    return train, val, test
