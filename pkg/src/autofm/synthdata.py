"""Synthetic corpora: note sequences rendered from a known FM patch with
scripted envelopes. Used by the example scripts and by experiments that need
ground truth (the generating topology and exact control tracks are known).
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from . import fileio
from .features import HOP_SIZE, SAMPLE_RATE
from .fm import PatchTopology, Performance, Waveform, render

# envelope recipe per oscillator id: level = scale * shape(t) ** power
DEFAULT_ENV_SCALES = {0: (0.9, 1.0), 1: (1.5, 1.2), 2: (1.0, 1.6)}


def note_shape(n_frames: int, hop_size: int = HOP_SIZE, sample_rate: int = SAMPLE_RATE,
               attack: float = 0.04, decay: float = 1.1) -> np.ndarray:
    """Pluck-like attack/decay contour in [0, 1]."""
    t = np.arange(n_frames) * hop_size / sample_rate
    shape = (1.0 - np.exp(-t / attack)) * np.exp(-t / decay)
    return shape / max(shape.max(), 1e-9)


def notes_performance(topology: PatchTopology, pitches, note_seconds: float = 2.0,
                      env_scales=None, vibrato_depth: float = 0.01, vibrato_hz: float = 5.0,
                      hop_size: int = HOP_SIZE, sample_rate: int = SAMPLE_RATE,
                      jitter_seed=None) -> Performance:
    """Scripted performance playing one note per pitch, back to back.

    ``jitter_seed`` adds per-note micro-variation (vibrato phase, detune,
    attack/decay timing) so repeated motifs stay statistically alike without
    being byte-identical.
    """
    env_scales = env_scales or DEFAULT_ENV_SCALES
    rng = np.random.default_rng(jitter_seed) if jitter_seed is not None else None
    note_frames = int(note_seconds * sample_rate) // hop_size
    f0_parts, shape_parts = [], []
    for i, pitch in enumerate(pitches):
        t = np.arange(note_frames) * hop_size / sample_rate
        phase, detune, attack, decay = float(i), 1.0, 0.04, 1.1
        if rng is not None:
            phase = rng.uniform(0, 2 * np.pi)
            detune = 1.0 + rng.uniform(-0.003, 0.003)
            attack = 0.04 * rng.uniform(0.8, 1.25)
            decay = 1.1 * rng.uniform(0.85, 1.2)
        f0_parts.append(pitch * detune * (1.0 + vibrato_depth * np.sin(2 * np.pi * vibrato_hz * t + phase)))
        shape_parts.append(note_shape(note_frames, hop_size, sample_rate, attack, decay))
    f0 = np.concatenate(f0_parts)
    shape = np.concatenate(shape_parts)
    envelopes = {}
    for osc in topology.oscillators:
        scale, power = env_scales[osc.id]
        envelopes[osc.id] = scale * shape ** power
    return Performance(f0=f0, loudness=np.zeros_like(f0), envelopes=envelopes,
                       hop_size=hop_size, sample_rate=sample_rate)


def write_note_corpus(out_dir, topology: PatchTopology, pitch_sets, note_seconds: float = 2.0,
                      env_scales=None, jitter_seed=None) -> list:
    """One WAV per pitch set; returns [(path, true_f0_frames)] for oracles."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for i, pitches in enumerate(pitch_sets):
        seed = None if jitter_seed is None else jitter_seed + i
        perf = notes_performance(topology, pitches, note_seconds, env_scales, jitter_seed=seed)
        wave = render(topology, perf)
        path = out / f"take_{i:02d}.wav"
        fileio.write_wav(path, wave)
        written.append((path, perf.f0))
    return written


def pitch_cycle(base_midis, count: int, seed: int = 0) -> list:
    """Deterministic pitch sequence (Hz) cycling a MIDI set with octave wobble."""
    rng = np.random.default_rng(seed)
    midis = [base_midis[i % len(base_midis)] + int(rng.integers(-1, 2)) for i in range(count)]
    return [440.0 * 2 ** ((m - 69) / 12) for m in midis]
