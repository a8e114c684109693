#!/usr/bin/env python3
"""Morphing a designed patch by editing frequency ratios.

The patch is a brass-like six-oscillator design: a single FM pair (carrier
ratio 3) plus a carrier at ratio 7 driven by two modulators, one of which
carries a nested modulator. Two edits show how single parameters move whole
formants:

  1. carrier 7 -> 10: the upper formant jumps from the 7th to the 10th
     harmonic;
  2. left modulator 1 -> 2: sidebands space out to every other harmonic,
     thinning the low register.

Outputs land in demos/output/05/.
"""

from pathlib import Path

import numpy as np
from scipy.io import wavfile

from autofm import fileio
from autofm.fm import (
    OUTPUT,
    FrequencyRatio,
    OscillatorSpec,
    PatchTopology,
    Performance,
)
from autofm.pipeline import cmd_morph

OUT = Path(__file__).parent / "output" / "05"
OUT.mkdir(parents=True, exist_ok=True)

SR = 16000
HOP = 64
F0 = 200.0

patch = PatchTopology((
    OscillatorSpec(0, 0, FrequencyRatio(3), OUTPUT),
    OscillatorSpec(1, 1, FrequencyRatio(1), 0),
    OscillatorSpec(2, 0, FrequencyRatio(7), OUTPUT),
    OscillatorSpec(3, 1, FrequencyRatio(1), 2),
    OscillatorSpec(4, 1, FrequencyRatio(2), 2),
    OscillatorSpec(5, 2, FrequencyRatio(1), 3),
), (2, 3, 1))

frames = 2 * SR // HOP
decay = np.exp(-np.arange(frames) * HOP / SR / 1.5)
performance = Performance(
    f0=np.full(frames, F0),
    loudness=np.zeros(frames),
    envelopes={0: 0.35 * decay, 1: 0.7 * decay, 2: 0.9 * decay,
               3: 0.5 * decay, 4: 0.4 * decay, 5: 0.3 * decay},
    hop_size=HOP,
    sample_rate=SR,
)

patch_path = OUT / "brassy.json"
perf_path = OUT / "performance.npz"
fileio.save_patch(patch_path, patch, SR)
fileio.save_performance(perf_path, performance)


def centroid_above(path, cutoff_hz):
    # power-weighted so the dominant formant outvotes quantization noise
    sr, samples = wavfile.read(path)
    x = samples / 32768.0
    power = np.square(np.abs(np.fft.rfft(x)))
    freqs = np.fft.rfftfreq(len(x), 1.0 / sr)
    mask = freqs >= cutoff_hz
    return (freqs[mask] * power[mask]).sum() / power[mask].sum()


# edit 1: move the upper formant from the 7th to the 10th harmonic
paths = cmd_morph(patch_path, [(2, 10.0)], perf_path, OUT / "formant_shift")
before = centroid_above(paths["before_wav"], 5 * F0)
after = centroid_above(paths["after_wav"], 5 * F0)
print(f"upper-formant centroid: {before:.0f} Hz -> {after:.0f} Hz "
      f"(harmonic {before / F0:.1f} -> {after / F0:.1f})")

# edit 2: widen the left pair's sideband spacing to every other harmonic
paths = cmd_morph(patch_path, [(1, 2.0)], perf_path, OUT / "sideband_spacing")
print(f"modulator 1 -> 2 rendered to {paths['after_wav']}")
print(f"WAVs and spectrograms in {OUT}")
