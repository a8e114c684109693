"""On-disk formats: patch documents (JSON), performance files and feature
cache records (npz), and 16-bit mono WAV output."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import DataError
from .features import FrameFeatures
from .fm import (
    OUTPUT,
    FrequencyRatio,
    OscillatorSpec,
    PatchTopology,
    Performance,
    Waveform,
)

PATCH_FORMAT = "fm-patch"
PATCH_VERSION = 1
PERFORMANCE_VERSION = 1
FEATURES_VERSION = 1


def content_hash(samples: np.ndarray) -> str:
    """Stable identifier for a segment's samples."""
    return hashlib.sha256(np.ascontiguousarray(samples, dtype=np.float64).tobytes()).hexdigest()[:16]


# ---------------------------------------------------------------------------
# Patch documents
# ---------------------------------------------------------------------------

def patch_to_document(topology: PatchTopology, sample_rate: int) -> dict:
    granularity = topology.oscillators[0].ratio.granularity if topology.oscillators else 1.0
    oscillators = []
    for osc in topology.oscillators:
        target = osc.target if osc.target != OUTPUT else "output"
        oscillators.append({
            "id": osc.id,
            "layer": osc.layer,
            "ratio": round(osc.ratio.value, 9),
            "target": target,
        })
    return {
        "format": PATCH_FORMAT,
        "version": PATCH_VERSION,
        "sample_rate": int(sample_rate),
        "granularity": granularity,
        "oscillators": oscillators,
    }


def patch_from_document(doc: dict):
    """Returns (PatchTopology, sample_rate); raises DataError on bad input."""
    try:
        if doc.get("format", PATCH_FORMAT) != PATCH_FORMAT:
            raise ValueError(f"not a {PATCH_FORMAT} document")
        if int(doc.get("version", PATCH_VERSION)) != PATCH_VERSION:
            raise ValueError(f"unsupported patch version {doc['version']}")
        sample_rate = int(doc["sample_rate"])
        granularity = float(doc["granularity"])
        oscillators = []
        max_layer = 0
        for entry in doc["oscillators"]:
            target = entry["target"]
            if target == "output":
                target = OUTPUT
            elif target is not None:
                target = int(target)
            ratio = FrequencyRatio.from_value(float(entry["ratio"]), granularity)
            layer = int(entry["layer"])
            max_layer = max(max_layer, layer)
            oscillators.append(OscillatorSpec(int(entry["id"]), layer, ratio, target))
        counts = [0] * (max_layer + 1)
        for osc in oscillators:
            counts[osc.layer] += 1
        topology = PatchTopology(tuple(oscillators), tuple(max(c, 1) for c in counts))
        return topology, sample_rate
    except DataError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed patch document: {exc}") from exc


def save_patch(path, topology: PatchTopology, sample_rate: int):
    Path(path).write_text(json.dumps(patch_to_document(topology, sample_rate), indent=2) + "\n")


def load_patch(path):
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read patch {path}: {exc}") from exc
    return patch_from_document(doc)


# ---------------------------------------------------------------------------
# Performance files
# ---------------------------------------------------------------------------

def save_performance(path, performance: Performance):
    env_ids = sorted(performance.envelopes)
    payload = {
        "version": np.int64(PERFORMANCE_VERSION),
        "hop_size": np.int64(performance.hop_size),
        "sample_rate": np.int64(performance.sample_rate),
        "f0": np.asarray(performance.f0, dtype=np.float64),
        "loudness": np.asarray(performance.loudness, dtype=np.float64),
        "voiced": (np.asarray(performance.voiced, dtype=bool) if performance.voiced is not None
                   else np.ones(performance.n_frames, dtype=bool)),
        "env_ids": np.asarray(env_ids, dtype=np.int64),
    }
    for osc_id in env_ids:
        payload[f"env_{osc_id}"] = np.asarray(performance.envelopes[osc_id], dtype=np.float64)
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_performance(path) -> Performance:
    try:
        with np.load(path) as data:
            if int(data["version"]) != PERFORMANCE_VERSION:
                raise DataError(f"unsupported performance version {int(data['version'])}")
            envelopes = {int(i): data[f"env_{int(i)}"].copy() for i in data["env_ids"]}
            return Performance(
                f0=data["f0"].copy(),
                loudness=data["loudness"].copy(),
                envelopes=envelopes,
                hop_size=int(data["hop_size"]),
                sample_rate=int(data["sample_rate"]),
                voiced=data["voiced"].copy(),
            )
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"cannot read performance {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Feature cache records
# ---------------------------------------------------------------------------

def save_features(path, features: FrameFeatures, audio: np.ndarray):
    with open(path, "wb") as fh:
        np.savez(
            fh,
            version=np.int64(FEATURES_VERSION),
            frame_size=np.int64(features.frame_size),
            hop_size=np.int64(features.hop_size),
            sample_rate=np.int64(features.sample_rate),
            f0=features.f0,
            voiced=features.voiced,
            loudness=features.loudness,
            audio=np.asarray(audio, dtype=np.float64),
        )


def load_features(path):
    """Returns (FrameFeatures, audio)."""
    try:
        with np.load(path) as data:
            if int(data["version"]) != FEATURES_VERSION:
                raise DataError(f"unsupported feature-cache version {int(data['version'])}")
            features = FrameFeatures(
                f0=data["f0"].copy(),
                voiced=data["voiced"].copy(),
                loudness=data["loudness"].copy(),
                frame_size=int(data["frame_size"]),
                hop_size=int(data["hop_size"]),
                sample_rate=int(data["sample_rate"]),
            )
            return features, data["audio"].copy()
    except DataError:
        raise
    except Exception as exc:
        raise DataError(f"cannot read feature cache {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# WAV
# ---------------------------------------------------------------------------

def write_wav(path, waveform: Waveform):
    """16-bit PCM mono."""
    samples = np.clip(waveform.samples, -1.0, 1.0)
    wavfile.write(path, waveform.sample_rate, (samples * 32767.0).astype(np.int16))


def wav_bytes(waveform: Waveform) -> bytes:
    import io

    buf = io.BytesIO()
    samples = np.clip(waveform.samples, -1.0, 1.0)
    wavfile.write(buf, waveform.sample_rate, (samples * 32767.0).astype(np.int16))
    return buf.getvalue()
