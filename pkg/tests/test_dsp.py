from __future__ import annotations

import math
from pathlib import Path

import numpy as np
import pytest
import scipy.io.wavfile

from ewer2 import dsp

from mfcc_oracle import (golden_clips, oracle_filterbank, oracle_frame_count,
                         oracle_mfcc)

DATA_DIR = Path(__file__).resolve().parent / "data"


# ------------------------------------------------------------- framing


def test_frame_count_one_second():
    pcm = np.zeros(16000)
    assert dsp.frame_signal(pcm).shape == (98, 400)


def test_frame_count_exact_one_frame():
    assert dsp.frame_signal(np.zeros(400)).shape == (1, 400)


def test_short_signal_zero_padded():
    pcm = np.ones(399)
    frames = dsp.frame_signal(pcm)
    assert frames.shape == (1, 400)
    assert frames[0, -1] == 0.0
    assert frames[0, :399].all()


def test_frame_starts_every_160_samples():
    pcm = np.arange(1200, dtype=np.float64)
    frames = dsp.frame_signal(pcm)
    assert oracle_frame_count(1200) == frames.shape[0]
    for t in range(frames.shape[0]):
        assert frames[t, 0] == 160.0 * t


def test_empty_signal_rejected():
    with pytest.raises(ValueError):
        dsp.frame_signal(np.array([]))
    with pytest.raises(ValueError):
        dsp.compute_mfcc(np.array([]))


# -------------------------------------------------------------- window


def test_hamming_closed_form_endpoints():
    w = dsp.hamming_window()
    assert w[0] == pytest.approx(0.08, abs=1e-12)
    assert w[399] == pytest.approx(0.08, abs=1e-12)
    assert w[199] == pytest.approx(0.54 - 0.46 * math.cos(2 * math.pi * 199 / 399), abs=1e-15)


def test_hamming_symmetry():
    w = dsp.hamming_window()
    assert np.allclose(w, w[::-1], atol=1e-15)


# ----------------------------------------------------------- mel scale


def test_mel_anchor_values():
    assert dsp.mel(0.0) == 0.0
    assert dsp.mel(700.0) == pytest.approx(2595.0 * math.log10(2.0), abs=1e-9)


def test_mel_roundtrip():
    freqs = np.linspace(0, 8000, 33)
    assert np.allclose(dsp.mel_to_hz(dsp.mel(freqs)), freqs, atol=1e-8)


def test_filterbank_shape_and_weights():
    fb = dsp.mel_filterbank_matrix()
    assert fb.shape == (26, 257)
    assert (fb >= 0).all()
    assert (fb.sum(axis=1) > 0).all()
    # un-normalized triangles peak near 1
    assert fb.max() <= 1.0 + 1e-12
    assert fb.max(axis=1).min() > 0.5


def test_filterbank_matches_oracle():
    assert np.allclose(dsp.mel_filterbank_matrix(), oracle_filterbank(), atol=1e-12)


def test_filterbank_rejects_fmax_above_nyquist():
    with pytest.raises(ValueError):
        dsp.mel_filterbank_matrix(fmax=8001.0)


# ----------------------------------------------------------------- mfcc


def test_mfcc_shape_follows_framing():
    rng = np.random.default_rng(40)
    for n in (400, 401, 777, 4000):
        feats = dsp.compute_mfcc(rng.normal(0, 0.1, n))
        assert feats.shape == (oracle_frame_count(n), 13)


def test_mfcc_rejects_wrong_sample_rate():
    with pytest.raises(ValueError):
        dsp.compute_mfcc(np.zeros(1600), sample_rate=8000)


def test_mfcc_zero_signal_constant_frames():
    feats = dsp.compute_mfcc(np.zeros(16000))
    assert np.allclose(feats, feats[0])
    # all filterbank energies hit the floor, so c0 is sqrt(26) * ln(1e-10)
    # and every higher coefficient is zero
    assert feats[0, 0] == pytest.approx(math.sqrt(26.0) * math.log(1e-10), rel=1e-12)
    assert np.allclose(feats[:, 1:], 0.0, atol=1e-9)


def test_mfcc_deterministic():
    pcm = np.random.default_rng(41).normal(0, 0.2, 3200)
    a = dsp.compute_mfcc(pcm)
    b = dsp.compute_mfcc(pcm.copy())
    assert (a == b).all()


def test_sine_peaks_in_filter_near_1khz():
    t = np.arange(8000) / 16000.0
    pcm = 0.5 * np.sin(2 * math.pi * 1000.0 * t)
    energies = dsp.filterbank_energies(pcm)
    vertices = dsp.mel_to_hz(np.linspace(dsp.mel(0.0), dsp.mel(8000.0), 28))
    centers = vertices[1:-1]
    peak = np.argmax(energies, axis=1)
    assert (peak == peak[0]).all()
    assert abs(centers[peak[0]] - 1000.0) < 110.0


def test_gain_changes_only_c0():
    pcm = np.random.default_rng(42).normal(0, 0.2, 4800)
    base = dsp.compute_mfcc(pcm)
    scaled = dsp.compute_mfcc(3.0 * pcm)
    assert np.allclose(base[:, 1:], scaled[:, 1:], atol=1e-6)
    assert not np.allclose(base[:, 0], scaled[:, 0], atol=1e-3)


def test_mfcc_matches_oracle_on_random_clip():
    pcm = np.random.default_rng(43).normal(0, 0.2, 880)
    assert np.abs(dsp.compute_mfcc(pcm) - oracle_mfcc(pcm)).max() < 1e-8


@pytest.mark.parametrize("name", ["noise", "tones", "short"])
def test_mfcc_golden_fixture(name):
    fixture = np.load(DATA_DIR / f"mfcc_golden_{name}.npz")
    got = dsp.compute_mfcc(fixture["pcm"])
    assert got.shape == fixture["mfcc"].shape
    assert np.abs(got - fixture["mfcc"]).max() < 1e-4


def test_golden_fixtures_match_current_clips():
    # the committed pcm must be the seeded clips this module documents
    clips = golden_clips()
    for name, pcm in clips.items():
        fixture = np.load(DATA_DIR / f"mfcc_golden_{name}.npz")
        assert (fixture["pcm"] == pcm).all()


# ------------------------------------------------------------------ wav


def test_wav_round_trip(tmp_path):
    pcm = np.random.default_rng(44).uniform(-0.9, 0.9, 1600)
    path = tmp_path / "clip.wav"
    dsp.save_wav(path, pcm)
    back = dsp.load_wav(path)
    assert back.shape == pcm.shape
    # write scales by 32767, read divides by 32768: error < (|x| + 0.5) / 32768
    assert np.abs(back - pcm).max() <= 1.5 / 32768.0


def test_load_wav_rejects_wrong_rate(tmp_path):
    path = tmp_path / "slow.wav"
    scipy.io.wavfile.write(path, 8000, np.zeros(800, dtype=np.int16))
    with pytest.raises(ValueError, match="16000"):
        dsp.load_wav(path)


def test_load_wav_rejects_stereo(tmp_path):
    path = tmp_path / "stereo.wav"
    scipy.io.wavfile.write(path, 16000, np.zeros((800, 2), dtype=np.int16))
    with pytest.raises(ValueError, match="mono"):
        dsp.load_wav(path)
