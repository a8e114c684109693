#!/usr/bin/env python3
"""Control-feature extraction walkthrough.

Renders a few FM notes, then runs the pitch tracker, the A-weighted loudness
measure, the multi-scale spectral loss, and the MFCC embedding statistics
that later drive training and search.

Outputs land in demos/output/02/.
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from autofm.features import (
    a_weighting_db,
    embed,
    estimate_f0,
    extract_features,
    mss_loss,
)
from autofm.fm import nested_fm_patch, render
from autofm.search import frechet_distance
from autofm.synthdata import notes_performance

OUT = Path(__file__).parent / "output" / "02"
OUT.mkdir(parents=True, exist_ok=True)

# --- render a short phrase and extract its features -------------------------

patch = nested_fm_patch(1, 2, 3)
perf = notes_performance(patch, [330.0, 392.0, 494.0], note_seconds=1.0, jitter_seed=1)
audio = render(patch, perf).samples
feats = extract_features(audio)

fig, axes = plt.subplots(3, 1, figsize=(9, 7), sharex=True)
t = np.arange(feats.n_frames) * feats.hop_size / feats.sample_rate
axes[0].plot(t, perf.f0, label="scripted f0", lw=1.5)
axes[0].plot(t[feats.voiced], feats.f0[feats.voiced], ".", ms=2, label="estimated f0")
axes[0].set_ylabel("Hz")
axes[0].legend()
axes[1].plot(t, feats.loudness)
axes[1].set_ylabel("loudness [dB]")
axes[2].plot(t, feats.voiced.astype(int))
axes[2].set_ylabel("voiced")
axes[2].set_xlabel("time [s]")
fig.tight_layout()
fig.savefig(OUT / "feature_tracks.png", dpi=110)

voiced_err = np.abs(feats.f0[feats.voiced] - perf.f0[feats.voiced]) / perf.f0[feats.voiced]
print(f"pitch tracker: {feats.voiced.mean():.0%} voiced, "
      f"median error {np.median(voiced_err):.3%} on voiced frames")

# --- the A-weighting curve ---------------------------------------------------

freqs = np.linspace(20, 8000, 500)
fig, ax = plt.subplots(figsize=(8, 3.5))
ax.semilogx(freqs, a_weighting_db(freqs))
ax.axhline(0, color="gray", lw=0.5)
ax.axvline(1000, color="gray", lw=0.5)
ax.set_xlabel("frequency [Hz]")
ax.set_ylabel("gain [dB]")
ax.set_title("A-weighting (0 dB at 1 kHz)")
fig.tight_layout()
fig.savefig(OUT / "a_weighting.png", dpi=110)
print(f"A-weight at 100 Hz: {a_weighting_db(100.0):.2f} dB (ears discount lows)")

# --- spectral distance orders timbres ---------------------------------------

other = render(nested_fm_patch(2, 1, 1),
               notes_performance(nested_fm_patch(2, 1, 1), [330.0, 392.0, 494.0],
                                 note_seconds=1.0, jitter_seed=1)).samples
print(f"multi-scale spectral loss, self: {mss_loss(audio, audio):.3f}, "
      f"vs different patch: {mss_loss(audio, other):.3f}")

# --- embedding statistics and the distance between corpora ------------------

stats_fm = embed([audio])
stats_other = embed([other])
print(f"embedding stats: mean dim {stats_fm.mean.shape[0]}, "
      f"{stats_fm.count} frames; distance between the two patches' corpora: "
      f"{frechet_distance(stats_fm, stats_other):.1f}")
print(f"figures in {OUT}")
