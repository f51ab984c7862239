from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from avvp import data
from avvp.data import SynthConfig, VideoRecord, read_features, synth_generate, write_features
from avvp.errors import ConfigError, DataError

from conftest import tiny_config


# -- feature files ----------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(arrays(np.float32, st.tuples(st.integers(1, 12), st.integers(1, 9)),
              elements=st.floats(-1e6, 1e6, width=32)))
def test_feature_round_trip_is_bit_exact(tmp_path_factory, feats):
    path = tmp_path_factory.mktemp("f") / "x.avvp"
    write_features(path, feats)
    back = read_features(path)
    assert back.dtype == np.float64
    assert back.astype(np.float32).tobytes() == feats.tobytes()


def test_feature_header_layout(tmp_path):
    path = tmp_path / "x.avvp"
    write_features(path, np.arange(6, dtype=np.float32).reshape(2, 3))
    raw = path.read_bytes()
    assert raw[:4] == b"AVVP"
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [1, 2, 3]
    assert len(raw) == 16 + 6 * 4


def test_bad_magic_names_file(tmp_path):
    path = tmp_path / "broken.avvp"
    write_features(path, np.ones((2, 2)))
    raw = bytearray(path.read_bytes())
    raw[:4] = b"XXXX"
    path.write_bytes(bytes(raw))
    with pytest.raises(DataError) as exc:
        read_features(path)
    assert "broken.avvp" in str(exc.value)


def test_truncated_payload_and_missing_file(tmp_path):
    path = tmp_path / "t.avvp"
    write_features(path, np.ones((3, 2)))
    path.write_bytes(path.read_bytes()[:-4])
    with pytest.raises(DataError):
        read_features(path)
    with pytest.raises(DataError):
        read_features(tmp_path / "missing.avvp")


# -- manifest ---------------------------------------------------------------

def test_dataset_round_trip(tmp_path, tiny_dataset, tiny_split):
    train, val, test = tiny_split
    manifest = data.save_dataset(tmp_path, tiny_dataset, {"train": train, "val": val, "test": test})
    loaded = data.load(manifest)
    by_id = {r.id: r for r in train + val + test}
    assert len(loaded) == len(by_id)
    for rec in loaded.records:
        ref = by_id[rec.id]
        assert rec.audio.tobytes() == ref.audio.tobytes()
        assert rec.visual.tobytes() == ref.visual.tobytes()
        assert np.array_equal(rec.label, ref.label)
        if ref.segment_gt is None:
            assert rec.segment_gt is None
        else:
            assert np.array_equal(rec.segment_gt[0], ref.segment_gt[0])
            assert np.array_equal(rec.segment_gt[1], ref.segment_gt[1])
    assert {r.id for r in data.load(manifest, split="test").records} == {r.id for r in test}
    assert loaded.extra["class_signals"] == tiny_dataset.extra["class_signals"]


def test_single_video_manifest(tmp_path):
    ds = synth_generate(SynthConfig(num_videos=1, d_a=7, d_v=9))
    manifest = data.save_dataset(tmp_path, ds, {"test": ds.records})
    loaded = data.load(manifest)
    assert len(loaded) == 1
    assert loaded.records[0].audio.shape == (10, 7) and loaded.records[0].visual.shape == (10, 9)


def _edit_manifest(path, fn):
    meta = json.loads(path.read_text())
    fn(meta)
    path.write_text(json.dumps(meta))


def test_load_errors_name_the_video(tmp_path, tiny_dataset):
    manifest = data.save_dataset(tmp_path, tiny_dataset, {"test": tiny_dataset.records[:3]})
    vid = tiny_dataset.records[1].id

    def bad_label(meta):
        meta["videos"][1]["labels"] = [99]

    _edit_manifest(manifest, bad_label)
    with pytest.raises(DataError) as exc:
        data.load(manifest)
    assert vid in str(exc.value)

    manifest = data.save_dataset(tmp_path, tiny_dataset, {"test": tiny_dataset.records[:3]})
    _edit_manifest(manifest, lambda m: m.update(d_a=99))
    with pytest.raises(DataError) as exc:
        data.load(manifest)
    assert tiny_dataset.records[0].id in str(exc.value)


def test_label_must_be_or_of_grids():
    gt = (np.zeros((3, 2), np.int8), np.zeros((3, 2), np.int8))
    rec = VideoRecord("v", np.zeros((3, 1)), np.zeros((3, 1)), np.array([1, 0], np.int8), gt)
    with pytest.raises(DataError):
        rec.check(2)


# -- synthetic generator ----------------------------------------------------

def test_generator_is_deterministic():
    a, b = synth_generate(tiny_config()), synth_generate(tiny_config())
    for ra, rb in zip(a.records, b.records):
        assert ra.audio.tobytes() == rb.audio.tobytes() and ra.visual.tobytes() == rb.visual.tobytes()
        assert np.array_equal(ra.segment_gt[0], rb.segment_gt[0])


@pytest.mark.parametrize("seed", range(5))
def test_generated_records_are_consistent(seed):
    ds = synth_generate(tiny_config(seed=seed, num_videos=50))
    for rec in ds.records:
        rec.check(ds.num_classes)


def test_audio_only_events_leave_visual_grid_empty():
    ds = synth_generate(tiny_config(p_audio_only=1.0, p_visual_only=0.0, p_audio_visual=0.0))
    for rec in ds.records:
        assert rec.segment_gt[1].sum() == 0 and rec.segment_gt[0].sum() > 0


def test_noiseless_event_adds_exact_signal():
    cfg = tiny_config(noise=0.0, max_events=1, p_audio_only=0.0, p_visual_only=0.0, p_audio_visual=1.0)
    ds = synth_generate(cfg)
    sig_a = np.array(ds.extra["class_signals"]["audio"])
    sig_v = np.array(ds.extra["class_signals"]["visual"])
    for rec in ds.records:
        (c,) = np.flatnonzero(rec.label)
        inside = rec.segment_gt[0][:, c].astype(bool)
        assert np.array_equal(rec.audio[inside], np.tile(sig_a[c], (inside.sum(), 1)))
        assert np.all(rec.audio[~inside] == 0)
        assert np.array_equal(rec.visual[inside], np.tile(sig_v[c], (inside.sum(), 1)))


def test_event_mix_is_logged():
    ds = synth_generate(SynthConfig())
    counts = ds.extra["event_type_counts"]
    assert counts["audio"] / sum(counts.values()) >= 0.30


@pytest.mark.parametrize("kwargs", [
    dict(p_audio_only=0.5, p_visual_only=0.5, p_audio_visual=0.5),
    dict(p_audio_only=-0.1, p_visual_only=0.6, p_audio_visual=0.5),
    dict(noise=-1.0),
    dict(max_events=0),
])
def test_invalid_synth_config(kwargs):
    with pytest.raises(ConfigError):
        SynthConfig(**kwargs)


# -- split ------------------------------------------------------------------

def test_split_sizes_and_discipline():
    ds = synth_generate(tiny_config(num_videos=100))
    train, val, test = data.split(ds.records, (0.8, 0.1, 0.1), seed=4)
    assert (len(train), len(val), len(test)) == (80, 10, 10)
    ids = [r.id for r in train + val + test]
    assert sorted(ids) == sorted(r.id for r in ds.records)
    assert all(r.segment_gt is None for r in train)
    assert all(r.segment_gt is not None for r in val + test)


def test_all_train_split():
    ds = synth_generate(tiny_config(num_videos=10))
    train, val, test = data.split(ds.records, (1, 0, 0))
    assert len(train) == 10 and not val and not test
    assert all(r.segment_gt is None for r in train)


def test_split_is_seeded():
    ds = synth_generate(tiny_config(num_videos=40))
    a = [[r.id for r in part] for part in data.split(ds.records, seed=9)]
    b = [[r.id for r in part] for part in data.split(ds.records, seed=9)]
    c = [[r.id for r in part] for part in data.split(ds.records, seed=10)]
    assert a == b and a != c


def test_default_split_is_200_40_40():
    ds = synth_generate(SynthConfig())
    assert [len(p) for p in data.split(ds.records)] == [200, 40, 40]


@pytest.mark.parametrize("fr", [(0.5, 0.5, 0.5), (1.2, -0.1, -0.1), (0.5, 0.5)])
def test_invalid_fractions(fr):
    with pytest.raises(ConfigError):
        data.split(synth_generate(tiny_config()).records, fr)
