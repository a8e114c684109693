// Iterative radix-2 FFT, enough to draw spectrograms client-side.

export function fftMagnitudes(input: Float64Array | Float32Array): Float64Array {
    const n = input.length;
    if ((n & (n - 1)) !== 0) {
        throw new Error(`FFT size must be a power of two, got ${n}`);
    }
    const re = new Float64Array(n);
    const im = new Float64Array(n);
    // bit-reversed copy
    let j = 0;
    for (let i = 0; i < n; i++) {
        re[j] = input[i];
        let bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j |= bit;
    }
    for (let len = 2; len <= n; len <<= 1) {
        const angle = (-2 * Math.PI) / len;
        const wRe = Math.cos(angle);
        const wIm = Math.sin(angle);
        for (let start = 0; start < n; start += len) {
            let curRe = 1;
            let curIm = 0;
            for (let k = 0; k < len / 2; k++) {
                const even = start + k;
                const odd = start + k + len / 2;
                const tRe = re[odd] * curRe - im[odd] * curIm;
                const tIm = re[odd] * curIm + im[odd] * curRe;
                re[odd] = re[even] - tRe;
                im[odd] = im[even] - tIm;
                re[even] += tRe;
                im[even] += tIm;
                const nextRe = curRe * wRe - curIm * wIm;
                curIm = curRe * wIm + curIm * wRe;
                curRe = nextRe;
            }
        }
    }
    const mags = new Float64Array(n / 2 + 1);
    for (let k = 0; k <= n / 2; k++) {
        mags[k] = Math.hypot(re[k], im[k]);
    }
    return mags;
}
