// Minimal 16-bit PCM mono WAV reader (the only format the service emits).

export interface DecodedWav {
    samples: Float32Array;
    sampleRate: number;
}

export function decodeWav(buffer: ArrayBuffer): DecodedWav {
    const view = new DataView(buffer);
    const tag = (offset: number) =>
        String.fromCharCode(view.getUint8(offset), view.getUint8(offset + 1),
            view.getUint8(offset + 2), view.getUint8(offset + 3));

    if (tag(0) !== "RIFF" || tag(8) !== "WAVE") {
        throw new Error("not a RIFF/WAVE file");
    }
    let offset = 12;
    let sampleRate = 0;
    let channels = 1;
    let bits = 16;
    while (offset + 8 <= view.byteLength) {
        const chunk = tag(offset);
        const size = view.getUint32(offset + 4, true);
        if (chunk === "fmt ") {
            const format = view.getUint16(offset + 8, true);
            channels = view.getUint16(offset + 10, true);
            sampleRate = view.getUint32(offset + 12, true);
            bits = view.getUint16(offset + 22, true);
            if (format !== 1 || bits !== 16) {
                throw new Error(`unsupported WAV encoding (format ${format}, ${bits} bits)`);
            }
        } else if (chunk === "data") {
            const count = Math.floor(size / 2 / channels);
            const samples = new Float32Array(count);
            for (let i = 0; i < count; i++) {
                // average channels; the service sends mono anyway
                let value = 0;
                for (let c = 0; c < channels; c++) {
                    value += view.getInt16(offset + 8 + (i * channels + c) * 2, true);
                }
                samples[i] = value / channels / 32768;
            }
            return { samples, sampleRate };
        }
        offset += 8 + size + (size % 2);
    }
    throw new Error("no data chunk found");
}

export function encodeWav(samples: Float32Array, sampleRate: number): ArrayBuffer {
    const buffer = new ArrayBuffer(44 + samples.length * 2);
    const view = new DataView(buffer);
    const writeTag = (offset: number, text: string) => {
        for (let i = 0; i < text.length; i++) view.setUint8(offset + i, text.charCodeAt(i));
    };
    writeTag(0, "RIFF");
    view.setUint32(4, 36 + samples.length * 2, true);
    writeTag(8, "WAVE");
    writeTag(12, "fmt ");
    view.setUint32(16, 16, true);
    view.setUint16(20, 1, true);
    view.setUint16(22, 1, true);
    view.setUint32(24, sampleRate, true);
    view.setUint32(28, sampleRate * 2, true);
    view.setUint16(32, 2, true);
    view.setUint16(34, 16, true);
    writeTag(36, "data");
    view.setUint32(40, samples.length * 2, true);
    for (let i = 0; i < samples.length; i++) {
        const clamped = Math.max(-1, Math.min(1, samples[i]));
        view.setInt16(44 + i * 2, Math.round(clamped * 32767), true);
    }
    return buffer;
}
