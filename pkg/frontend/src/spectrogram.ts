// Log-magnitude spectrograms with the same parameters the CLI reports use
// (2048-point FFT, 75% overlap), so what the musician sees here matches the
// offline figures.

import { fftMagnitudes } from "./fft.js";

export const FFT_SIZE = 2048;
export const HOP = FFT_SIZE / 4;
const LOG_FLOOR = 1e-6;

export interface Spectrogram {
    frames: number;
    bins: number;
    values: Float64Array;   // frames * bins, log magnitude in dB
}

let hannCache: Float64Array | null = null;

function hann(): Float64Array {
    if (!hannCache) {
        hannCache = new Float64Array(FFT_SIZE);
        for (let i = 0; i < FFT_SIZE; i++) {
            hannCache[i] = 0.5 - 0.5 * Math.cos((2 * Math.PI * i) / FFT_SIZE);
        }
    }
    return hannCache;
}

export function spectrogram(samples: Float32Array): Spectrogram {
    const window = hann();
    const frames = samples.length >= FFT_SIZE
        ? 1 + Math.floor((samples.length - FFT_SIZE) / HOP)
        : 0;
    const bins = FFT_SIZE / 2 + 1;
    const values = new Float64Array(frames * bins);
    const frame = new Float64Array(FFT_SIZE);
    for (let f = 0; f < frames; f++) {
        const start = f * HOP;
        for (let i = 0; i < FFT_SIZE; i++) {
            frame[i] = samples[start + i] * window[i];
        }
        const mags = fftMagnitudes(frame);
        for (let k = 0; k < bins; k++) {
            values[f * bins + k] = 20 * Math.log10(mags[k] + LOG_FLOOR);
        }
    }
    return { frames, bins, values };
}

/** Sum of absolute log-magnitude differences; exactly zero only when the
 * two spectrograms are identical. */
export function spectrogramDifference(a: Spectrogram, b: Spectrogram): number {
    if (a.frames !== b.frames || a.bins !== b.bins) {
        return Number.POSITIVE_INFINITY;
    }
    let total = 0;
    for (let i = 0; i < a.values.length; i++) {
        total += Math.abs(a.values[i] - b.values[i]);
    }
    return total;
}

/** Per-cell absolute difference, for the overlay view. */
export function differenceMap(a: Spectrogram, b: Spectrogram): Spectrogram {
    if (a.frames !== b.frames || a.bins !== b.bins) {
        throw new Error("spectrogram shapes differ");
    }
    const values = new Float64Array(a.values.length);
    for (let i = 0; i < values.length; i++) {
        values[i] = Math.abs(a.values[i] - b.values[i]);
    }
    return { frames: a.frames, bins: a.bins, values };
}
