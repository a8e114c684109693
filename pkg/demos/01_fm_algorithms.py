#!/usr/bin/env python3
"""Tour of the four classic FM algorithm topologies.

Builds single, nested, formant, and double FM patches, renders each with
simple scripted envelopes at a constant pitch, and plots their line spectra.
For single FM with constant modulation index I the sideband amplitudes
follow Bessel functions |J_n(I)|, which the first plot makes visible.

Outputs land in demos/output/01/.
"""

from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np
from scipy.special import jv

from autofm import fileio
from autofm.fm import (
    Performance,
    double_fm_patch,
    formant_fm_patch,
    nested_fm_patch,
    render,
    single_fm_patch,
    validate_topology,
)

OUT = Path(__file__).parent / "output" / "01"
OUT.mkdir(parents=True, exist_ok=True)

SR = 16000
HOP = 64
F0 = 200.0
SECONDS = 2.0
FRAMES = int(SECONDS * SR) // HOP


def constant_perf(levels):
    return Performance(
        f0=np.full(FRAMES, F0),
        loudness=np.zeros(FRAMES),
        envelopes={osc_id: np.full(FRAMES, v) for osc_id, v in levels.items()},
        hop_size=HOP,
        sample_rate=SR,
    )


def spectrum(samples):
    spec = 2.0 * np.abs(np.fft.rfft(samples)) / len(samples)
    freqs = np.fft.rfftfreq(len(samples), 1.0 / SR)
    return freqs, spec


# --- the four textbook algorithms -----------------------------------------

patches = {
    "single": (single_fm_patch(carrier_ratio=4, modulator_ratio=1), {0: 1.0, 1: 1.0}),
    "nested": (nested_fm_patch(1, 2, 3), {0: 0.9, 1: 1.2, 2: 0.8}),
    "formant": (formant_fm_patch(carrier1_ratio=1, carrier2_ratio=5, modulator_ratio=1),
                {0: 0.8, 1: 0.6, 2: 0.9, 3: 0.9}),
    "double": (double_fm_patch(1, 1, 3), {0: 0.9, 1: 0.8, 2: 0.6}),
}

fig, axes = plt.subplots(2, 2, figsize=(11, 6), sharex=True)
for ax, (name, (patch, levels)) in zip(axes.ravel(), patches.items()):
    assert validate_topology(patch) == [], name
    wave = render(patch, constant_perf(levels))
    fileio.write_wav(OUT / f"{name}.wav", wave)
    freqs, spec = spectrum(wave.samples)
    ax.plot(freqs, spec, lw=0.8)
    ax.set_title(f"{name} FM ({len(patch.oscillators)} oscillators)")
    ax.set_xlim(0, 4000)
print(f"rendered {', '.join(patches)} to {OUT}")
axes[1][0].set_xlabel("frequency [Hz]")
axes[1][1].set_xlabel("frequency [Hz]")
fig.tight_layout()
fig.savefig(OUT / "spectra.png", dpi=110)

# --- Bessel sidebands of single FM -----------------------------------------

index = 1.0
wave = render(patches["single"][0], constant_perf({0: 1.0, 1: index}))
freqs, spec = spectrum(wave.samples)
fig, ax = plt.subplots(figsize=(9, 4))
ax.plot(freqs, spec, lw=0.8, label="rendered spectrum")
orders = range(-3, 6)      # carrier sits at 4*f0 = 800 Hz, sidebands every f0
ax.scatter([800 + n * 200 for n in orders], [abs(jv(n, index)) for n in orders],
           color="crimson", zorder=3, s=18, label="|J_n(I)| prediction")
ax.set_xlim(0, 2600)
ax.set_xlabel("frequency [Hz]")
ax.set_ylabel("amplitude")
ax.legend()
fig.tight_layout()
fig.savefig(OUT / "bessel_sidebands.png", dpi=110)
print(f"carrier 4*f0 with modulator 1*f0 at I={index}: sidebands match Bessel weights")
