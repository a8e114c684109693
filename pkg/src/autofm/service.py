"""HTTP front door for the patch editor: validate patches, render audio
through stored performances or supernet inference, list store contents.

The store directory is read-only except for the explicit patch-save
endpoint; the checkpoint and stores are loaded once and shared, so identical
requests return identical bytes.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from . import fileio
from .errors import DataError, NumericError
from .fm import render, validate_topology
from .model import infer_performance, load_checkpoint
from .pipeline import apply_ratio_edits

SIDECAR_HEADER = "X-Render-Sidecar"


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(store_dir, checkpoint=None) -> FastAPI:
    store = Path(store_dir)
    patches_dir = store / "patches"
    segments_dir = store / "segments"
    performances_dir = store / "performances"
    for d in (patches_dir, segments_dir, performances_dir):
        d.mkdir(parents=True, exist_ok=True)

    model = None
    if checkpoint is not None and Path(checkpoint).exists():
        model, _, _ = load_checkpoint(checkpoint)

    app = FastAPI(title="autofm render service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
        expose_headers=[SIDECAR_HEADER],
    )

    async def parse_json(request: Request):
        try:
            return json.loads(await request.body())
        except json.JSONDecodeError:
            return None

    def resolve_patch(payload: dict):
        """(topology, error response); honors inline documents and stored ids."""
        if "patch" in payload and payload["patch"] is not None:
            topology, _ = fileio.patch_from_document(payload["patch"])
            return topology, None
        patch_id = payload.get("patch_id")
        if not patch_id:
            return None, _error(400, "request needs 'patch' or 'patch_id'")
        path = patches_dir / f"{patch_id}.json"
        if not path.exists():
            return None, _error(404, f"unknown patch {patch_id!r}")
        topology, _ = fileio.load_patch(path)
        return topology, None

    @app.post("/api/validate")
    async def validate(request: Request):
        payload = await parse_json(request)
        if payload is None or not isinstance(payload, dict):
            return _error(400, "body must be a patch document")
        try:
            topology, _ = fileio.patch_from_document(payload)
        except DataError as exc:
            return _error(400, str(exc))
        violations = validate_topology(topology)
        return {"violations": [
            {"oscillator_id": v.oscillator_id, "rule": v.rule, "message": v.message}
            for v in violations
        ]}

    @app.post("/api/render")
    async def render_endpoint(request: Request):
        payload = await parse_json(request)
        if payload is None or not isinstance(payload, dict):
            return _error(400, "body must be a render request")
        try:
            topology, err = resolve_patch(payload)
        except DataError as exc:
            return _error(422, str(exc))
        if err is not None:
            return err

        performance_id = payload.get("performance_id")
        segment_id = payload.get("segment_id")
        if bool(performance_id) == bool(segment_id):
            return _error(400, "exactly one of 'performance_id' or 'segment_id' is required")

        try:
            if payload.get("ratio_edits"):
                edits = [(int(e["id"]), float(e["ratio"])) for e in payload["ratio_edits"]]
                topology = apply_ratio_edits(topology, edits)
            violations = validate_topology(topology)
            if violations:
                return _error(422, "; ".join(v.message for v in violations))

            if performance_id:
                path = performances_dir / f"{performance_id}.npz"
                if not path.exists():
                    return _error(404, f"unknown performance {performance_id!r}")
                performance = fileio.load_performance(path)
            else:
                path = segments_dir / f"{segment_id}.npz"
                if not path.exists():
                    return _error(404, f"unknown segment {segment_id!r}")
                if model is None:
                    return _error(400, "service was started without a checkpoint; "
                                       "segment renders need supernet inference")
                features, _ = fileio.load_features(path)
                performance = infer_performance(model, features, topology)

            wave = render(topology, performance)
        except DataError as exc:
            return _error(422, str(exc))
        except NumericError as exc:
            return _error(500, str(exc))

        voiced = performance.voiced if performance.voiced is not None else np.ones_like(performance.f0, bool)
        voiced_f0 = np.asarray(performance.f0)[np.asarray(voiced, bool)]
        sidecar = {
            "duration": wave.duration,
            "peak": float(np.abs(wave.samples).max()) if len(wave.samples) else 0.0,
            "f0_summary": {
                "min": float(voiced_f0.min()) if voiced_f0.size else 0.0,
                "max": float(voiced_f0.max()) if voiced_f0.size else 0.0,
                "mean": float(voiced_f0.mean()) if voiced_f0.size else 0.0,
            },
        }
        return Response(
            content=fileio.wav_bytes(wave),
            media_type="audio/wav",
            headers={SIDECAR_HEADER: json.dumps(sidecar, sort_keys=True)},
        )

    @app.get("/api/patches")
    def list_patches():
        entries = []
        for path in sorted(patches_dir.glob("*.json")):
            try:
                topology, sample_rate = fileio.load_patch(path)
            except DataError:
                continue
            entries.append({
                "id": path.stem,
                "oscillators": len(topology.oscillators),
                "sample_rate": sample_rate,
                "granularity": topology.oscillators[0].ratio.granularity if topology.oscillators else 1.0,
            })
        return entries

    @app.get("/api/patches/{patch_id}")
    def get_patch(patch_id: str):
        path = patches_dir / f"{patch_id}.json"
        if not path.exists():
            return _error(404, f"unknown patch {patch_id!r}")
        return json.loads(path.read_text())

    @app.post("/api/patches/{patch_id}")
    async def save_patch(patch_id: str, request: Request):
        payload = await parse_json(request)
        if payload is None or not isinstance(payload, dict):
            return _error(400, "body must be a patch document")
        try:
            topology, sample_rate = fileio.patch_from_document(payload)
        except DataError as exc:
            return _error(400, str(exc))
        fileio.save_patch(patches_dir / f"{patch_id}.json", topology, sample_rate)
        return JSONResponse(status_code=201, content={"id": patch_id})

    @app.get("/api/segments")
    def list_segments():
        entries = []
        for path in sorted(segments_dir.glob("*.npz")):
            try:
                features, _ = fileio.load_features(path)
            except DataError:
                continue
            voiced_f0 = features.f0[features.voiced]
            entries.append({
                "id": path.stem,
                "frames": features.n_frames,
                "hop_size": features.hop_size,
                "sample_rate": features.sample_rate,
                "f0_median": float(np.median(voiced_f0)) if voiced_f0.size else 0.0,
            })
        return entries

    return app
