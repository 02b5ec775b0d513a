from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from emocog.domain import EMOTION_ORDER, AgentState, EmotionConfig, EmotionLabel, PadVector
from emocog.emotion import classify_emotion, compute_pad, dominance_for_rank, happiness_fraction

CFG = EmotionConfig()


def brute_nearest(p, cfg=CFG):
    # exhaustive scan over every label; ties resolved by position in the tie order
    dists = [(math.dist(p, cfg.centroids[lab.value]), EMOTION_ORDER.index(lab), lab) for lab in EmotionLabel]
    return min(dists)[2]


def state(i=0.0, h=100.0, r=0.5):
    return AgentState(0, i, h, r)


def test_pleasure_tracks_income_gain():
    pad = compute_pad(state(i=0), state(i=30), CFG)
    assert pad.pleasure == pytest.approx(0.3)
    assert pad.arousal == 0.0


def test_arousal_tracks_health_change():
    pad = compute_pad(state(h=100), state(h=90), CFG)
    assert pad.arousal == pytest.approx(-0.2)


def test_pad_is_clamped():
    pad = compute_pad(state(i=0, h=100), state(i=1e6, h=-1e6), CFG)
    assert pad.pleasure == 1.0 and pad.arousal == -1.0


@pytest.mark.parametrize("rank,expected", [(0.0, -0.5), (0.2, -0.5), (1 / 3, 0.0), (0.5, 0.0), (2 / 3, 0.5), (1.0, 0.5)])
def test_dominance_tiers(rank, expected):
    assert dominance_for_rank(rank, CFG) == expected


@pytest.mark.parametrize("label", list(EmotionLabel))
def test_centroid_maps_to_its_label(label):
    assert classify_emotion(PadVector(*CFG.centroids[label.value]), CFG) is label


def test_tie_goes_to_earlier_label():
    cfg = EmotionConfig(centroids={lab.value: [0.0, 0.0, 0.0] for lab in EmotionLabel})
    assert classify_emotion(PadVector(0.1, 0.1, 0.1), cfg) is EmotionLabel.HAPPINESS


unit = st.floats(-1, 1, allow_nan=False)


@given(unit, unit, unit)
def test_classifier_agrees_with_brute_force(p, a, d):
    assert classify_emotion(PadVector(p, a, d), CFG) is brute_nearest((p, a, d))


big = st.floats(-1e7, 1e7, allow_nan=False)


@given(big, big, st.floats(0, 1), big, big, st.floats(0, 1))
def test_pad_always_in_unit_cube(i0, h0, r0, i1, h1, r1):
    pad = compute_pad(AgentState(0, i0, h0, r0), AgentState(1, i1, h1, r1), CFG)
    assert all(-1 <= x <= 1 for x in pad.as_tuple())


def test_happiness_fraction():
    labels = [EmotionLabel.HAPPINESS, "neutral", "happiness", EmotionLabel.SADNESS]
    assert happiness_fraction(labels) == 0.5
    with pytest.raises(ValueError):
        happiness_fraction([])
