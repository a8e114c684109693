import { describe, expect, it } from "vitest";

import { fftMagnitudes } from "../src/fft.js";
import { layoutTopology, outputSubtreeCount, reachableIds } from "../src/graph.js";
import { FFT_SIZE, HOP, spectrogram, spectrogramDifference } from "../src/spectrogram.js";
import { decodeWav, encodeWav } from "../src/wav.js";
import { nestedPatchDocument, trumpetPatchDocument, validateDocument } from "./fake_service.js";

function naiveDftMagnitudes(x: number[]): number[] {
    const n = x.length;
    const mags: number[] = [];
    for (let k = 0; k <= n / 2; k++) {
        let re = 0;
        let im = 0;
        for (let i = 0; i < n; i++) {
            re += x[i] * Math.cos((-2 * Math.PI * k * i) / n);
            im += x[i] * Math.sin((-2 * Math.PI * k * i) / n);
        }
        mags.push(Math.hypot(re, im));
    }
    return mags;
}

describe("fft", () => {
    it("matches a naive DFT oracle", () => {
        const sizes = [8, 32, 128];
        for (const n of sizes) {
            const x = Array.from({ length: n }, (_, i) => Math.sin(0.7 * i) + 0.3 * Math.cos(2.1 * i));
            const fast = fftMagnitudes(Float64Array.from(x));
            const slow = naiveDftMagnitudes(x);
            for (let k = 0; k <= n / 2; k++) {
                expect(fast[k]).toBeCloseTo(slow[k], 8);
            }
        }
    });

    it("rejects non-power-of-two sizes", () => {
        expect(() => fftMagnitudes(new Float64Array(100))).toThrow(/power of two/);
    });

    it("localizes a pure tone to its bin", () => {
        const n = 1024;
        const k0 = 60;
        const x = Float64Array.from({ length: n }, (_, i) => Math.sin((2 * Math.PI * k0 * i) / n));
        const mags = fftMagnitudes(x);
        expect(mags[k0]).toBeCloseTo(n / 2, 6);
        expect(Math.max(...mags.filter((_, k) => Math.abs(k - k0) > 1))).toBeLessThan(1e-6);
    });
});

describe("wav", () => {
    it("round-trips 16-bit mono", () => {
        const samples = Float32Array.from({ length: 512 }, (_, i) => 0.5 * Math.sin(i / 10));
        const decoded = decodeWav(encodeWav(samples, 16000));
        expect(decoded.sampleRate).toBe(16000);
        expect(decoded.samples.length).toBe(512);
        for (let i = 0; i < 512; i += 31) {
            expect(Math.abs(decoded.samples[i] - samples[i])).toBeLessThan(1e-4);
        }
    });

    it("rejects garbage", () => {
        expect(() => decodeWav(new ArrayBuffer(64))).toThrow(/RIFF/);
    });
});

describe("spectrogram", () => {
    const tone = (freq: number) =>
        Float32Array.from({ length: FFT_SIZE + 3 * HOP }, (_, i) => Math.sin((2 * Math.PI * freq * i) / 16000));

    it("difference is exactly zero for identical audio", () => {
        const a = spectrogram(tone(440));
        const b = spectrogram(tone(440));
        expect(spectrogramDifference(a, b)).toBe(0);
    });

    it("difference is positive for different audio", () => {
        expect(spectrogramDifference(spectrogram(tone(440)), spectrogram(tone(660))))
            .toBeGreaterThan(0);
    });

    it("shape mismatch is infinite", () => {
        const short = spectrogram(tone(440).slice(0, FFT_SIZE));
        expect(spectrogramDifference(spectrogram(tone(440)), short)).toBe(Infinity);
    });
});

describe("topology view", () => {
    it("lays out nested FM as three nodes in three layers", () => {
        const layout = layoutTopology(nestedPatchDocument());
        expect(layout.nodes).toHaveLength(3);
        expect(layout.layers).toBe(3);
        expect(new Set(layout.nodes.map((n) => n.layer)).size).toBe(3);
        expect(layout.nodes.find((n) => n.layer === 0)?.color).toBe("green");
        expect(layout.nodes.find((n) => n.layer === 1)?.color).toBe("blue");
        // carriers render at the bottom
        const carrier = layout.nodes.find((n) => n.layer === 0)!;
        const top = layout.nodes.find((n) => n.layer === 2)!;
        expect(carrier.y).toBeGreaterThan(top.y);
    });

    it("dims dangling oscillators", () => {
        const doc = nestedPatchDocument();
        doc.oscillators.push({ id: 9, layer: 1, ratio: 4, target: null });
        const layout = layoutTopology(doc);
        expect(layout.nodes.find((n) => n.id === 9)?.dimmed).toBe(true);
        expect(layout.nodes.find((n) => n.id === 0)?.dimmed).toBe(false);
        expect(reachableIds(doc).has(9)).toBe(false);
    });

    it("shows the six-oscillator brass patch as two sub-trees", () => {
        const doc = trumpetPatchDocument();
        expect(outputSubtreeCount(doc)).toBe(2);
        expect(layoutTopology(doc).nodes).toHaveLength(6);
    });
});

describe("local validation mirror", () => {
    it("accepts the demo patches", () => {
        expect(validateDocument(nestedPatchDocument())).toHaveLength(0);
        expect(validateDocument(trumpetPatchDocument())).toHaveLength(0);
    });

    it("flags cross-layer edges and modulator output taps", () => {
        const doc = nestedPatchDocument();
        doc.oscillators[2].target = 0;      // layer 2 -> layer 0 skips a layer
        expect(validateDocument(doc).map((v) => v.rule)).toContain("rule-1");
        const doc2 = nestedPatchDocument();
        doc2.oscillators[2].target = "output";
        expect(validateDocument(doc2).map((v) => v.rule)).toContain("rule-2");
    });
});
