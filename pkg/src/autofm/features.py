"""Control features extracted from recordings: pitch, loudness, spectral
losses, and embedding statistics.

Everything here is stateless and deterministic; audio is mono float64 at
16 kHz (load_audio resamples). Frames are extracted centered (the segment is
zero-padded by half a frame on each side), which is what makes a 4 s segment
at hop 64 come out to exactly 1000 frames.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy.fft import dct
from scipy.io import wavfile
from scipy.signal import resample_poly

from .errors import DimensionMismatch, LengthMismatch, TooFewFrames, UnreadableAudio
from .fm import Waveform

SAMPLE_RATE = 16000
FRAME_SIZE = 2048
HOP_SIZE = 64
SEGMENT_SECONDS = 4.0
SILENCE_DB_FLOOR = -60.0

F0_MIN = 50.0
F0_MAX = 2000.0
YIN_THRESHOLD = 0.1

MSS_FFT_SIZES = (2048, 1024, 512, 256, 128, 64)
MSS_OVERLAP = 0.75
MSS_EPS = 1e-7

EMBED_FRAME = 2048
EMBED_HOP = 512
MEL_BANDS = 64
N_MFCC = 20

_POWER_EPS = 1e-12


@dataclass
class FrameFeatures:
    """Frame-aligned pitch and loudness tracks for one segment."""

    f0: np.ndarray
    voiced: np.ndarray
    loudness: np.ndarray
    frame_size: int = FRAME_SIZE
    hop_size: int = HOP_SIZE
    sample_rate: int = SAMPLE_RATE

    @property
    def n_frames(self) -> int:
        return len(self.f0)


# ---------------------------------------------------------------------------
# Loading and framing
# ---------------------------------------------------------------------------

def load_audio(path) -> Waveform:
    """Read a WAV file as mono float64 at 16 kHz."""
    try:
        sr, data = wavfile.read(path)
    except Exception as exc:
        raise UnreadableAudio(f"cannot read {path}: {exc}") from exc
    data = np.asarray(data)
    if data.ndim == 2:
        data = data.mean(axis=1)
    if np.issubdtype(data.dtype, np.integer):
        data = data.astype(np.float64) / float(2 ** (8 * data.dtype.itemsize - 1))
    else:
        data = data.astype(np.float64)
    if sr != SAMPLE_RATE:
        ratio = Fraction(SAMPLE_RATE, int(sr))
        data = resample_poly(data, ratio.numerator, ratio.denominator)
    return Waveform(data, SAMPLE_RATE)


def n_frames_for(n_samples: int, hop_size: int = HOP_SIZE) -> int:
    """Number of centered frames covering n_samples."""
    return int(np.ceil(n_samples / hop_size))


def frame_centered(x: np.ndarray, frame_size: int, hop_size: int) -> np.ndarray:
    """(n_frames, frame_size) view of x, reflection-padded half a frame each
    side so frame f is centered on sample f*hop_size."""
    x = np.asarray(x, dtype=np.float64)
    n = len(x)
    half = frame_size // 2
    n_frames = n_frames_for(n, hop_size)
    pad_end = half + max(0, (n_frames - 1) * hop_size + half - n)
    if n > max(half, pad_end):
        padded = np.pad(x, (half, pad_end), mode="reflect")
    else:
        padded = np.pad(x, (half, pad_end))
    windows = np.lib.stride_tricks.sliding_window_view(padded, frame_size)
    return windows[::hop_size][:n_frames]


@lru_cache(maxsize=32)
def _hann(size: int) -> np.ndarray:
    n = np.arange(size)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / size)


# ---------------------------------------------------------------------------
# A-weighted loudness
# ---------------------------------------------------------------------------

def a_weighting_db(freq) -> np.ndarray:
    """IEC A-weighting curve in dB (0 dB at 1 kHz)."""
    f2 = np.square(np.asarray(freq, dtype=np.float64))
    num = (12194.0 ** 2) * f2 ** 2
    den = (f2 + 20.6 ** 2) * np.sqrt((f2 + 107.7 ** 2) * (f2 + 737.9 ** 2)) * (f2 + 12194.0 ** 2)
    with np.errstate(divide="ignore"):
        return 20.0 * np.log10(num / den) + 2.00


@lru_cache(maxsize=8)
def _a_weights_squared(frame_size: int, sample_rate: int) -> np.ndarray:
    freqs = np.fft.rfftfreq(frame_size, d=1.0 / sample_rate)
    gain_db = a_weighting_db(freqs)
    gain_db[0] = -np.inf    # DC carries no weight
    return 10.0 ** (gain_db / 10.0)


def a_weighted_loudness(x, frame_size: int = FRAME_SIZE, hop_size: int = HOP_SIZE,
                        sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """Per-frame A-weighted loudness in dB.

    Frame power spectra are weighted by the squared A-curve and summed;
    amplitudes are normalized so a full-scale mid-band sine reads near 0 dB.
    """
    frames = frame_centered(x, frame_size, hop_size)
    win = _hann(frame_size)
    spec = np.fft.rfft(frames * win, axis=1)
    amp = np.abs(spec) * (2.0 / win.sum())
    weights = _a_weights_squared(frame_size, sample_rate)
    power = np.where(np.isfinite(weights), weights, 0.0) * np.square(amp)
    return 10.0 * np.log10(power.sum(axis=1) + _POWER_EPS)


# ---------------------------------------------------------------------------
# Pitch (autocorrelation difference function with absolute threshold)
# ---------------------------------------------------------------------------

def estimate_f0(x, sample_rate: int = SAMPLE_RATE, frame_size: int = FRAME_SIZE,
                hop_size: int = HOP_SIZE, fmin: float = F0_MIN, fmax: float = F0_MAX,
                threshold: float = YIN_THRESHOLD):
    """Per-frame fundamental frequency estimate.

    Classic difference-function pitch tracking: for each frame compute
    d(tau) over an integration window, normalize by the cumulative mean,
    take the first lag dipping under the absolute threshold, descend to its
    local minimum and refine by parabolic interpolation. Frames where no lag
    clears the threshold are flagged unvoiced (f0 = 0 there).

    Returns (f0, voiced).
    """
    frames = frame_centered(x, frame_size, hop_size)
    n_frames = frames.shape[0]
    w = frame_size // 2
    tau_max = int(sample_rate / fmin)
    tau_min = max(2, int(np.ceil(sample_rate / fmax)))
    assert w + tau_max <= frame_size, "frame too short for the lag range"

    head = frames[:, :w]
    full = frames[:, : w + tau_max]
    fft_len = 1 << int(np.ceil(np.log2(w + tau_max)))
    spec_head = np.fft.rfft(head, n=fft_len, axis=1)
    spec_full = np.fft.rfft(full, n=fft_len, axis=1)
    corr = np.fft.irfft(np.conj(spec_head) * spec_full, n=fft_len, axis=1)[:, : tau_max + 1]

    csum = np.cumsum(np.square(full), axis=1)
    e0 = csum[:, w - 1]
    tails = np.empty((n_frames, tau_max + 1))
    tails[:, 0] = e0
    tails[:, 1:] = csum[:, w : w + tau_max] - csum[:, 0:tau_max]
    diff = np.maximum(e0[:, None] + tails - 2.0 * corr, 0.0)

    # cumulative-mean normalization; lag 0 is defined as 1
    running = np.cumsum(diff[:, 1:], axis=1)
    taus = np.arange(1, tau_max + 1, dtype=np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        cmnd = np.where(running > 0, diff[:, 1:] * taus / running, 1.0)
    cmnd = np.concatenate([np.ones((n_frames, 1)), cmnd], axis=1)

    f0 = np.zeros(n_frames)
    voiced = np.zeros(n_frames, dtype=bool)
    candidates = cmnd[:, tau_min : tau_max + 1] < threshold
    has_dip = candidates.any(axis=1)
    first_dip = np.argmax(candidates, axis=1) + tau_min

    for i in np.nonzero(has_dip)[0]:
        tau = int(first_dip[i])
        row = cmnd[i]
        while tau + 1 <= tau_max and row[tau + 1] < row[tau]:
            tau += 1
        # refine on the raw difference function; the normalized one is skewed
        shift = 0.0
        if 1 <= tau < tau_max:
            a, b, c = diff[i, tau - 1], diff[i, tau], diff[i, tau + 1]
            denom = a - 2.0 * b + c
            if abs(denom) > 1e-12:
                shift = np.clip(0.5 * (a - c) / denom, -1.0, 1.0)
        f0[i] = sample_rate / (tau + shift)
        voiced[i] = True
    return f0, voiced


def extract_features(x, sample_rate: int = SAMPLE_RATE) -> FrameFeatures:
    """Pitch and loudness tracks for a segment of samples."""
    f0, voiced = estimate_f0(x, sample_rate)
    loud = a_weighted_loudness(x, sample_rate=sample_rate)
    return FrameFeatures(f0=f0, voiced=voiced, loudness=loud, sample_rate=sample_rate)


# ---------------------------------------------------------------------------
# Segmentation
# ---------------------------------------------------------------------------

def segment_corpus(waveforms, segment_seconds: float = SEGMENT_SECONDS,
                   silence_db_floor: float = SILENCE_DB_FLOOR) -> list:
    """Cut waveforms into non-overlapping segments, dropping silent ones.

    Input waveforms must already be mono 16 kHz (load_audio takes care of
    that). A segment is kept when its mean A-weighted loudness clears the
    floor; trailing partial segments are dropped.
    """
    segments = []
    seg_len = int(round(segment_seconds * SAMPLE_RATE))
    for wave in waveforms:
        samples = wave.samples if isinstance(wave, Waveform) else np.asarray(wave, dtype=np.float64)
        for start in range(0, len(samples) - seg_len + 1, seg_len):
            chunk = samples[start : start + seg_len]
            if a_weighted_loudness(chunk).mean() >= silence_db_floor:
                segments.append(chunk)
    return segments


# ---------------------------------------------------------------------------
# Multi-scale spectral loss
# ---------------------------------------------------------------------------

def stft_hop(fft_size: int) -> int:
    return int(fft_size * (1.0 - MSS_OVERLAP))


def stft_magnitudes(x: np.ndarray, fft_size: int) -> np.ndarray:
    """Hann-windowed magnitude STFT, non-centered, tail dropped."""
    hop = stft_hop(fft_size)
    n_frames = 1 + (len(x) - fft_size) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, fft_size)[:: hop][:n_frames]
    return np.abs(np.fft.rfft(frames * _hann(fft_size), axis=1))


def mss_loss(a, b, fft_sizes=MSS_FFT_SIZES, eps: float = MSS_EPS) -> float:
    """Multi-scale spectral distance between two equal-length waveforms.

    Sum over FFT sizes of mean L1 distances between linear and log magnitude
    spectrograms. Symmetric, zero only when all magnitude spectra agree.
    """
    xa = a.samples if isinstance(a, Waveform) else np.asarray(a, dtype=np.float64)
    xb = b.samples if isinstance(b, Waveform) else np.asarray(b, dtype=np.float64)
    if len(xa) != len(xb):
        raise LengthMismatch(f"waveform lengths differ: {len(xa)} vs {len(xb)}")
    if isinstance(a, Waveform) and isinstance(b, Waveform) and a.sample_rate != b.sample_rate:
        raise LengthMismatch("sample rates differ")
    total = 0.0
    for size in fft_sizes:
        if len(xa) < size:
            continue
        ma = stft_magnitudes(xa, size)
        mb = stft_magnitudes(xb, size)
        total += np.abs(ma - mb).mean()
        total += np.abs(np.log(ma + eps) - np.log(mb + eps)).mean()
    return float(total)


# ---------------------------------------------------------------------------
# Embeddings and their Gaussian statistics
# ---------------------------------------------------------------------------

@lru_cache(maxsize=4)
def _mel_filterbank(n_bands: int, frame_size: int, sample_rate: int) -> np.ndarray:
    def to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def from_mel(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    n_bins = frame_size // 2 + 1
    mel_points = np.linspace(to_mel(0.0), to_mel(sample_rate / 2.0), n_bands + 2)
    hz_points = from_mel(mel_points)
    bins = hz_points * frame_size / sample_rate
    fb = np.zeros((n_bands, n_bins))
    for j in range(n_bands):
        lo, mid, hi = bins[j], bins[j + 1], bins[j + 2]
        k = np.arange(n_bins)
        rising = (k - lo) / max(mid - lo, 1e-9)
        falling = (hi - k) / max(hi - mid, 1e-9)
        fb[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mfcc_frames(x, n_coeffs: int = N_MFCC, frame_size: int = EMBED_FRAME,
                hop_size: int = EMBED_HOP, sample_rate: int = SAMPLE_RATE) -> np.ndarray:
    """(n_frames, n_coeffs) cepstral embedding of one segment."""
    x = x.samples if isinstance(x, Waveform) else np.asarray(x, dtype=np.float64)
    hop = hop_size
    n_frames = 1 + max(0, (len(x) - frame_size)) // hop
    frames = np.lib.stride_tricks.sliding_window_view(x, frame_size)[::hop][:n_frames]
    power = np.square(np.abs(np.fft.rfft(frames * _hann(frame_size), axis=1)))
    mel = power @ _mel_filterbank(MEL_BANDS, frame_size, sample_rate).T
    logmel = np.log(mel + 1e-10)
    return dct(logmel, type=2, axis=1, norm="ortho")[:, :n_coeffs]


@dataclass
class EmbeddingStats:
    """Gaussian fit (mean, covariance) of a set of embedding frames."""

    mean: np.ndarray
    covariance: np.ndarray
    count: int

    @classmethod
    def from_frames(cls, frames: np.ndarray) -> "EmbeddingStats":
        frames = np.asarray(frames, dtype=np.float64)
        if frames.shape[0] < 2:
            raise TooFewFrames(f"need at least 2 embedding frames, got {frames.shape[0]}")
        mean = frames.mean(axis=0)
        centered = frames - mean
        cov = centered.T @ centered / (frames.shape[0] - 1)
        return cls(mean=mean, covariance=0.5 * (cov + cov.T), count=frames.shape[0])

    def merge(self, other: "EmbeddingStats") -> "EmbeddingStats":
        """Pooled statistics, exactly as if both frame sets were stacked."""
        if self.mean.shape != other.mean.shape:
            raise DimensionMismatch("embedding dimensions differ")
        na, nb = self.count, other.count
        n = na + nb
        delta = other.mean - self.mean
        mean = self.mean + delta * (nb / n)
        m2 = (self.covariance * (na - 1) + other.covariance * (nb - 1)
              + np.outer(delta, delta) * (na * nb / n))
        cov = m2 / (n - 1)
        return EmbeddingStats(mean=mean, covariance=0.5 * (cov + cov.T), count=n)


def embed(segments, n_coeffs: int = N_MFCC) -> EmbeddingStats:
    """Gaussian embedding statistics over all frames of all segments."""
    frames = [mfcc_frames(seg, n_coeffs=n_coeffs) for seg in segments]
    if not frames:
        raise TooFewFrames("no segments to embed")
    return EmbeddingStats.from_frames(np.concatenate(frames, axis=0))
