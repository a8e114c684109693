import numpy as np
import pytest

from autofm import features
from autofm.errors import LengthMismatch, TooFewFrames
from autofm.features import (
    EmbeddingStats,
    a_weighted_loudness,
    a_weighting_db,
    embed,
    estimate_f0,
    extract_features,
    mfcc_frames,
    mss_loss,
    n_frames_for,
    segment_corpus,
)
from autofm.fm import Performance, nested_fm_patch, render, single_fm_patch

SR = features.SAMPLE_RATE


def sine(freq, seconds=4.0, amp=1.0, sr=SR):
    t = np.arange(int(seconds * sr)) / sr
    return amp * np.sin(2 * np.pi * freq * t)


def render_fm(topology, f0_hz, levels, seconds=4.0):
    frames = int(seconds * SR) // features.HOP_SIZE
    perf = Performance(
        f0=np.full(frames, float(f0_hz)),
        loudness=np.zeros(frames),
        envelopes={i: np.full(frames, float(v)) for i, v in levels.items()},
        hop_size=features.HOP_SIZE,
        sample_rate=SR,
    )
    return render(topology, perf).samples


# ---------------------------------------------------------------------------
# Framing / segmentation
# ---------------------------------------------------------------------------

def test_four_second_segment_yields_1000_frames():
    assert n_frames_for(4 * SR, 64) == 1000
    feats = extract_features(sine(440, 4.0))
    assert feats.n_frames == 1000
    assert len(feats.loudness) == len(feats.f0) == len(feats.voiced)


def test_segment_corpus_counts():
    assert len(segment_corpus([sine(440, 12.0)])) == 3
    assert len(segment_corpus([np.zeros(4 * SR)])) == 0


def test_segment_corpus_drops_silent_half():
    clip = np.concatenate([np.zeros(4 * SR), sine(440, 4.0, amp=0.3)])
    segments = segment_corpus([clip])
    assert len(segments) == 1
    # loudness-threshold oracle on each half
    assert a_weighted_loudness(clip[: 4 * SR]).mean() < features.SILENCE_DB_FLOOR
    assert a_weighted_loudness(clip[4 * SR :]).mean() >= features.SILENCE_DB_FLOOR


# ---------------------------------------------------------------------------
# A-weighted loudness
# ---------------------------------------------------------------------------

def test_a_curve_is_zero_at_1khz():
    assert abs(a_weighting_db(1000.0)) < 0.05


def test_a_curve_at_100hz():
    assert a_weighting_db(100.0) == pytest.approx(-19.145, abs=0.05)


def test_loudness_halving_amplitude_drops_6db():
    loud = a_weighted_loudness(sine(1000, 1.0, amp=1.0))
    half = a_weighted_loudness(sine(1000, 1.0, amp=0.5))
    deltas = loud - half
    assert np.median(deltas) == pytest.approx(20 * np.log10(2), abs=0.1)


def test_loudness_100hz_vs_1khz_matches_curve():
    l100 = np.median(a_weighted_loudness(sine(100, 1.0)))
    l1k = np.median(a_weighted_loudness(sine(1000, 1.0)))
    expected = a_weighting_db(100.0) - a_weighting_db(1000.0)
    assert (l100 - l1k) == pytest.approx(expected, abs=0.3)


def test_loudness_gain_shift_property():
    rng = np.random.default_rng(0)
    x = rng.normal(0, 0.1, 2 * SR)
    for gain in (0.25, 0.5, 2.0):
        base = a_weighted_loudness(x)
        scaled = a_weighted_loudness(gain * x)
        assert np.allclose(scaled - base, 20 * np.log10(gain), atol=0.1)


# ---------------------------------------------------------------------------
# Pitch estimation
# ---------------------------------------------------------------------------

def test_f0_pure_sine():
    f0, voiced = estimate_f0(sine(440, 2.0))
    assert voiced.mean() > 0.9
    assert np.all(np.abs(f0[voiced] - 440) < 1.0)


def test_f0_on_rendered_nested_patch():
    audio = render_fm(nested_fm_patch(1, 2, 3), 220.0, {0: 0.8, 1: 1.0, 2: 0.7}, 2.0)
    f0, voiced = estimate_f0(audio)
    assert voiced.mean() > 0.9
    assert np.all(np.abs(f0[voiced] - 220) < 2.0)


def test_f0_white_noise_mostly_unvoiced():
    rng = np.random.default_rng(42)
    noise = rng.normal(0, 0.3, 2 * SR)
    _, voiced = estimate_f0(noise)
    assert (~voiced).mean() >= 0.9


def test_f0_octave_safety_on_fm_tones():
    # carrier ratios that tempt the tracker to report a multiple of f0
    for ratio in (1, 2, 3):
        audio = render_fm(single_fm_patch(ratio, 1), 200.0, {0: 1.0, 1: 1.0}, 2.0)
        f0, voiced = estimate_f0(audio)
        assert voiced.any()
        close = np.abs(f0[voiced] - 200.0) <= 0.02 * 200.0
        assert close.mean() >= 0.95, f"ratio {ratio}: {close.mean():.2%} within 2%"


# ---------------------------------------------------------------------------
# Multi-scale spectral loss
# ---------------------------------------------------------------------------

def test_mss_zero_on_self_and_sign_flip():
    x = sine(440, 1.0)
    assert mss_loss(x, x) == 0.0
    assert mss_loss(x, -x) == pytest.approx(0.0, abs=1e-12)


def test_mss_orders_frequency_distance():
    x = sine(440, 1.0)
    far = mss_loss(x, sine(660, 1.0))
    near = mss_loss(x, sine(445, 1.0))
    assert far > near > 0


def test_mss_is_pseudometric():
    rng = np.random.default_rng(1)
    for _ in range(5):
        a, b, c = (rng.normal(0, 0.5, SR // 2) for _ in range(3))
        ab, bc, ac = mss_loss(a, b), mss_loss(b, c), mss_loss(a, c)
        assert ab == pytest.approx(mss_loss(b, a), abs=1e-12)
        assert ac <= ab + bc + 1e-9


def test_mss_length_mismatch():
    with pytest.raises(LengthMismatch):
        mss_loss(np.zeros(1000), np.zeros(999))


# ---------------------------------------------------------------------------
# Embeddings
# ---------------------------------------------------------------------------

def test_identical_frames_have_zero_covariance():
    frames = np.tile(np.arange(20.0), (30, 1))
    stats = EmbeddingStats.from_frames(frames)
    assert np.allclose(stats.covariance, 0.0)


def test_merge_matches_pooled_stats():
    rng = np.random.default_rng(9)
    a = rng.normal(0, 1, (40, 20))
    b = rng.normal(0.5, 2, (25, 20))
    merged = EmbeddingStats.from_frames(a).merge(EmbeddingStats.from_frames(b))
    pooled = EmbeddingStats.from_frames(np.concatenate([a, b]))
    assert merged.count == pooled.count
    assert np.allclose(merged.mean, pooled.mean, atol=1e-12)
    assert np.allclose(merged.covariance, pooled.covariance, atol=1e-10)


def test_merge_is_order_independent():
    rng = np.random.default_rng(10)
    a = EmbeddingStats.from_frames(rng.normal(0, 1, (15, 8)))
    b = EmbeddingStats.from_frames(rng.normal(1, 3, (50, 8)))
    ab, ba = a.merge(b), b.merge(a)
    assert np.allclose(ab.mean, ba.mean, atol=1e-12)
    assert np.allclose(ab.covariance, ba.covariance, atol=1e-12)


def test_embed_separates_sine_from_noise():
    rng = np.random.default_rng(2)
    sines = embed([sine(300, 4.0), sine(310, 4.0)])
    noises = embed([rng.normal(0, 0.3, 4 * SR), rng.normal(0, 0.3, 4 * SR)])
    assert np.linalg.norm(sines.mean - noises.mean) > 0


def test_embed_covariance_stays_psd():
    rng = np.random.default_rng(3)
    for _ in range(5):
        stats = embed([rng.normal(0, rng.uniform(0.01, 1.0), 4 * SR)])
        eigs = np.linalg.eigvalsh(stats.covariance)
        assert eigs.min() >= -1e-9
        assert np.allclose(stats.covariance, stats.covariance.T, atol=1e-9)


def test_embed_too_few_frames():
    with pytest.raises(TooFewFrames):
        EmbeddingStats.from_frames(np.zeros((1, 20)))


def test_mfcc_shape():
    coeffs = mfcc_frames(sine(440, 4.0))
    assert coeffs.shape[1] == features.N_MFCC
    assert coeffs.shape[0] >= 100
