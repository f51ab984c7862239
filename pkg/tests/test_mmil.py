from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from avvp import mmil
from avvp import tensor as tn
from avvp.han import AggregatedFeatures
from avvp.mmil import AttentionTensors, MmilParams
from avvp.tensor import Tensor


def _agg(rng, T=5, d=4, lead=()):
    return AggregatedFeatures(Tensor(rng.standard_normal((*lead, T, d))),
                              Tensor(rng.standard_normal((*lead, T, d))))


def _heads(rng, d, C, **fixed) -> MmilParams:
    arrays = {
        "cls_w": rng.standard_normal((d, C)), "cls_b": rng.standard_normal(C),
        "tp_w": rng.standard_normal((d, C)), "av_w": rng.standard_normal((d, C)),
    }
    arrays.update(fixed)
    return MmilParams(**{k: Tensor(v) for k, v in arrays.items()})


def _random_att(rng, T, C, lead=()):
    return mmil.attention_from_logits(Tensor(3 * rng.standard_normal((*lead, T, 2, C))),
                                      Tensor(3 * rng.standard_normal((*lead, T, 2, C))))


# -- segment_probs ----------------------------------------------------------

def test_zero_classifier_gives_half():
    rng = np.random.default_rng(0)
    p = _heads(rng, 4, 3, cls_w=np.zeros((4, 3)), cls_b=np.zeros(3))
    P = mmil.segment_probs(_agg(rng), p).data
    assert P.shape == (5, 2, 3) and np.all(P == 0.5)


def test_large_bias_stays_below_one():
    rng = np.random.default_rng(1)
    p = _heads(rng, 4, 3, cls_w=np.zeros((4, 3)), cls_b=np.full(3, 40.0))
    P = mmil.segment_probs(_agg(rng), p).data
    assert np.all(P < 1.0) and np.all(P > 1 - 1e-15)


def test_segment_probs_match_per_entry_oracle():
    rng = np.random.default_rng(2)
    agg, p = _agg(rng, T=6, d=5), _heads(rng, 5, 4)
    P = mmil.segment_probs(agg, p).data
    feats = (agg.audio.data, agg.visual.data)
    for t in range(6):
        for m in range(2):
            for c in range(4):
                z = feats[m][t] @ p.cls_w.data[:, c] + p.cls_b.data[c]
                assert abs(P[t, m, c] - 1 / (1 + math.exp(-z))) < 1e-12


# -- attention_tensors ------------------------------------------------------

def test_equal_logits_give_uniform_weights():
    rng = np.random.default_rng(3)
    zeros = {"tp_w": np.zeros((4, 3)), "av_w": np.zeros((4, 3))}
    att = mmil.attention_tensors(_agg(rng, T=5), _heads(rng, 4, 3, **zeros))
    assert np.allclose(att.w_tp.data, 1 / 5, rtol=0, atol=1e-15)
    assert np.all(att.w_av.data == 0.5)


def test_single_segment_temporal_weight_is_one():
    rng = np.random.default_rng(4)
    att = mmil.attention_tensors(_agg(rng, T=1), _heads(rng, 4, 3))
    assert np.all(att.w_tp.data == 1.0)


def test_ln3_modality_logit():
    av = np.zeros((2, 2, 3))
    av[1, 0, 2] = math.log(3)
    att = mmil.attention_from_logits(Tensor(np.zeros((2, 2, 3))), Tensor(av))
    assert np.allclose(att.w_av.data[1, :, 2], [0.75, 0.25], rtol=0, atol=1e-15)


def test_attention_axis_sums_1000_trials():
    worst = 0.0
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        T, C, d = (int(x) for x in rng.integers(1, 8, size=3))
        att = mmil.attention_tensors(_agg(rng, T=T, d=d, lead=(2,)), _heads(rng, d, C))
        worst = max(worst,
                    np.abs(att.w_tp.data.sum(axis=mmil.T_AXIS) - 1).max(),
                    np.abs(att.w_av.data.sum(axis=mmil.M_AXIS) - 1).max())
    assert worst <= 1e-10


# -- pooling ----------------------------------------------------------------

def test_pool_video_t1_example():
    P = Tensor(np.array([[[0.8], [0.4]]]))  # (T=1, M=2, C=1)
    att = AttentionTensors(Tensor(np.ones((1, 2, 1))), Tensor(np.full((1, 2, 1), 0.5)))
    assert abs(mmil.pool_video(P, att).data[0] - 0.6) < 1e-15


def test_pool_video_reduces_to_audio_pool_when_audio_weight_is_one():
    rng = np.random.default_rng(5)
    P = Tensor(rng.uniform(size=(6, 2, 3)))
    w_av = np.zeros((6, 2, 3))
    w_av[:, 0, :] = 1.0
    w_tp = _random_att(rng, 6, 3).w_tp
    att = AttentionTensors(w_tp, Tensor(w_av))
    assert np.array_equal(mmil.pool_video(P, att).data, mmil.pool_modality(P, w_tp, mmil.AUDIO).data)


def test_pool_video_constant_p_matches_summation_oracle():
    rng = np.random.default_rng(6)
    att = _random_att(rng, 7, 4)
    out = mmil.pool_video(Tensor(np.full((7, 2, 4), 0.3)), att).data
    wt, wa = att.w_tp.data, att.w_av.data
    for c in range(4):
        direct = 0.3 * math.fsum(wt[t, m, c] * wa[t, m, c] for t in range(7) for m in range(2))
        assert abs(out[c] - direct) < 1e-12


def test_pool_modality_examples():
    rng = np.random.default_rng(7)
    P1 = rng.uniform(size=(1, 2, 3))
    assert np.array_equal(mmil.pool_modality(Tensor(P1), Tensor(np.ones((1, 2, 3))), mmil.VISUAL).data, P1[0, 1])
    w_tp = _random_att(rng, 5, 3).w_tp
    const = mmil.pool_modality(Tensor(np.full((5, 2, 3), 0.35)), w_tp, mmil.AUDIO).data
    assert np.allclose(const, 0.35, rtol=0, atol=1e-15)
    P = Tensor(np.array([[[0.4]], [[0.8]]]).repeat(2, axis=1))  # (T=2, M=2, C=1)
    w = Tensor(np.array([[[0.25]], [[0.75]]]).repeat(2, axis=1))
    assert abs(mmil.pool_modality(P, w, mmil.AUDIO).data[0] - 0.7) < 1e-15


def test_pool_modality_rejects_bad_index():
    with pytest.raises(ValueError):
        mmil.pool_modality(Tensor(np.ones((2, 2, 1))), Tensor(np.ones((2, 2, 1))), 2)


def test_decompose_sums_to_pool():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        T, C = (int(x) for x in rng.integers(1, 9, size=2))
        att = _random_att(rng, T, C, lead=(3,))
        P = Tensor(rng.uniform(size=(3, T, 2, C)))
        a, v = mmil.decompose(P, att)
        assert np.all(np.abs(a.data + v.data - mmil.pool_video(P, att).data) <= 1e-12)


def test_decompose_with_time_constant_modality_weights():
    for seed in range(200):
        rng = np.random.default_rng(seed)
        T, C = (int(x) for x in rng.integers(1, 9, size=2))
        w_tp = _random_att(rng, T, C).w_tp
        row = rng.uniform(size=C)
        w_a, w_v = row, 1.0 - row
        w_av = np.broadcast_to(np.stack([w_a, w_v])[None], (T, 2, C))
        att = AttentionTensors(w_tp, Tensor(w_av))
        P = Tensor(rng.uniform(size=(T, 2, C)))
        a, v = mmil.decompose(P, att)
        p_a = mmil.pool_modality(P, w_tp, mmil.AUDIO).data
        p_v = mmil.pool_modality(P, w_tp, mmil.VISUAL).data
        assert np.all(np.abs(a.data - w_a * p_a) <= 1e-12)
        assert np.all(np.abs(mmil.pool_video(P, att).data - (w_a * p_a + w_v * p_v)) <= 1e-12)


def test_zero_visual_weight_gives_zero_visual_part():
    rng = np.random.default_rng(8)
    w_av = np.zeros((4, 2, 3))
    w_av[:, 0, :] = 1.0
    att = AttentionTensors(_random_att(rng, 4, 3).w_tp, Tensor(w_av))
    _, v = mmil.decompose(Tensor(rng.uniform(size=(4, 2, 3))), att)
    assert np.all(v.data == 0.0)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(1e-6, 0.5))
def test_monotone_in_segment_probs(seed, bump):
    rng = np.random.default_rng(seed)
    att = _random_att(rng, 5, 3)
    P = rng.uniform(0, 0.5, size=(5, 2, 3))
    idx = tuple(int(rng.integers(0, n)) for n in P.shape)
    Q = P.copy()
    Q[idx] += bump
    assert np.all(mmil.pool_video(Tensor(Q), att).data >= mmil.pool_video(Tensor(P), att).data)


def test_pooled_probability_bounds():
    rng = np.random.default_rng(9)
    att = _random_att(rng, 10, 6, lead=(4,))
    P = Tensor(rng.uniform(size=(4, 10, 2, 6)))
    for m in (mmil.AUDIO, mmil.VISUAL):
        out = mmil.pool_modality(P, att.w_tp, m).data
        assert np.all(out >= 0) and np.all(out <= 1)
    # the video pool sums one convex combination per modality, so it is bounded by 2
    out = mmil.pool_video(P, att).data
    assert np.all(out >= 0) and np.all(out <= 2)


def test_video_pool_can_exceed_one():
    # temporal weights pick t=0 for audio and t=1 for visual; modality weights pick
    # audio at t=0 and visual at t=1, so both modalities contribute their full mass
    w_tp = np.zeros((2, 2, 1))
    w_tp[0, 0, 0] = w_tp[1, 1, 0] = 1.0
    w_av = np.zeros((2, 2, 1))
    w_av[0, 0, 0] = w_av[1, 1, 0] = 1.0
    att = AttentionTensors(Tensor(w_tp), Tensor(w_av))
    assert mmil.pool_video(Tensor(np.full((2, 2, 1), 0.9)), att).data[0] == pytest.approx(1.8)


def test_pooling_gradients_pass_gradcheck():
    rng = np.random.default_rng(10)
    tp = Tensor(rng.standard_normal((5, 2, 3)), requires_grad=True)
    av = Tensor(rng.standard_normal((5, 2, 3)), requires_grad=True)
    logits = Tensor(rng.standard_normal((5, 2, 3)), requires_grad=True)

    def f():
        att = mmil.attention_from_logits(tp, av)
        P = tn.sigmoid(logits)
        return tn.sum_along_axis(tn.add(mmil.pool_video(P, att), mmil.pool_modality(P, att.w_tp, 1)))

    assert tn.gradcheck(f, [tp, av, logits], n_coords=30) < 1e-6


def test_attention_is_invariant_to_per_class_shift():
    # why the attention heads have no bias: it would cancel along each softmax axis
    rng = np.random.default_rng(11)
    tp, av = rng.standard_normal((6, 2, 3)), rng.standard_normal((6, 2, 3))
    shift = rng.standard_normal(3)
    base = mmil.attention_from_logits(Tensor(tp), Tensor(av))
    moved = mmil.attention_from_logits(Tensor(tp + shift), Tensor(av + shift))
    assert np.allclose(moved.w_tp.data, base.w_tp.data, rtol=0, atol=1e-15)
    assert np.allclose(moved.w_av.data, base.w_av.data, rtol=0, atol=1e-15)
