"""JSON-over-HTTP service for the interactive editor.

Exposes a single loaded checkpoint: shape listing, reconstruction, random
generation, and feature-steered editing. Responses are pure functions of
(checkpoint bytes, request), so identical requests against a restarted
server reproduce identical payloads. Mesh payloads are indexed triangle
lists with a configurable byte cap and a ``truncated`` flag.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Optional, Union

import numpy as np
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .dataset import FEATURE_NAMES
from .generation import (EDIT_CLAMP_SIGMA, LatentSampler, UnsupportedModelError,
                         edit_shape, fit_sampler, generate_cohort, synthesize)
from .mesh import TriMesh
from .model import LatentCode, ModelParams, load_checkpoint

PREVIEW_RESOLUTION = 48
FINAL_RESOLUTION = 64
DEFAULT_PAYLOAD_CAP_BYTES = 8 * 1024 * 1024
_FLOAT_BYTES_IN_JSON = 20  # decimal float plus separator, conservative


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message


class ReconstructRequest(BaseModel):
    shape_id: str
    resolution: Optional[int] = None


class GenerateRequest(BaseModel):
    seed: Optional[int] = 0
    overrides: Optional[dict[str, float]] = None
    resolution: Optional[int] = None


class EditRequest(BaseModel):
    base: Union[str, dict]
    features: dict[str, float] = {}
    resolution: Optional[int] = None


class SessionState:
    """One loaded checkpoint plus the last edit cycle, cache invalidated on
    any change of base code or overrides."""

    def __init__(self):
        self.checkpoint_id: str | None = None
        self.model: ModelParams | None = None
        self.sampler: LatentSampler | None = None
        self.base_key = None
        self.last_overrides = None
        self.cached_response: dict | None = None
        self.lock = threading.Lock()

    def load(self, path: str | Path) -> None:
        model = load_checkpoint(path)
        sampler = fit_sampler(model)
        with self.lock:
            self.model = model
            self.sampler = sampler
            self.checkpoint_id = str(path)
            self.base_key = None
            self.last_overrides = None
            self.cached_response = None

    def cache_get(self, base_key, overrides_key) -> dict | None:
        with self.lock:
            if self.base_key == base_key and self.last_overrides == overrides_key:
                return self.cached_response
            return None

    def cache_put(self, base_key, overrides_key, response: dict) -> None:
        with self.lock:
            self.base_key = base_key
            self.last_overrides = overrides_key
            self.cached_response = response


def mesh_payload(mesh: TriMesh, cap_bytes: int = DEFAULT_PAYLOAD_CAP_BYTES) -> dict:
    """Indexed triangle list, truncated face-first to stay under the cap."""
    faces = mesh.faces
    truncated = False
    estimated = (mesh.n_vertices * 3 + mesh.n_faces * 3) * _FLOAT_BYTES_IN_JSON
    if estimated > cap_bytes and mesh.n_faces > 0:
        keep = max(1, int(mesh.n_faces * cap_bytes / estimated))
        faces = faces[:keep]
        truncated = True
    used = np.unique(faces.reshape(-1)) if len(faces) else np.zeros(0, dtype=np.int64)
    remap = np.zeros(mesh.n_vertices, dtype=np.int64)
    remap[used] = np.arange(len(used))
    positions = mesh.vertices[used]
    indices = remap[faces] if len(faces) else faces
    return {
        "positions": [float(x) for x in positions.reshape(-1)],
        "indices": [int(i) for i in indices.reshape(-1)],
        "n_vertices": int(len(positions)),
        "n_faces": int(len(indices)),
        "truncated": truncated,
        "empty": bool(mesh.is_empty),
    }


def _measured_dict(measured) -> dict | None:
    return measured.to_dict() if measured is not None else None


def make_app(checkpoint: str | Path | None = None,
             payload_cap_bytes: int = DEFAULT_PAYLOAD_CAP_BYTES,
             ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="steershape service", version="1.0.0",
                  description="Reconstruct, generate and edit shapes from a "
                              "trained checkpoint.")
    state = SessionState()
    app.state.session = state

    @app.exception_handler(ApiError)
    async def _api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status,
                            content={"error": {"code": exc.code,
                                               "message": exc.message}})

    @app.exception_handler(RequestValidationError)
    async def _validation_error(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400,
                            content={"error": {"code": "malformed_request",
                                               "message": str(exc.errors())}})

    def model_or_503() -> ModelParams:
        if state.model is None:
            raise ApiError(503, "checkpoint_loading",
                           "no checkpoint is loaded yet; retry shortly")
        return state.model

    def resolve_resolution(value: int | None) -> int:
        res = value if value is not None else PREVIEW_RESOLUTION
        if not (8 <= res <= 256):
            raise ApiError(400, "bad_resolution",
                           "resolution must be between 8 and 256")
        return res

    def clamp_range(model: ModelParams) -> dict:
        out = {}
        for i, name in enumerate(model.feature_names):
            mu = model.scaler.mean[i]
            sd = model.scaler.std[i]
            out[name] = {"min": float(mu - EDIT_CLAMP_SIGMA * sd),
                         "max": float(mu + EDIT_CLAMP_SIGMA * sd),
                         "mean": float(mu), "std": float(sd)}
        return out

    @app.get("/health")
    def health():
        return {"status": "ok" if state.model is not None else "loading",
                "checkpoint": state.checkpoint_id}

    @app.get("/shapes")
    def shapes():
        model = model_or_503()
        entries = []
        for i, shape_id in enumerate(model.shape_ids):
            features = {name: float(model.features_raw[i, j])
                        for j, name in enumerate(FEATURE_NAMES)}
            entries.append({"id": shape_id, "features": features})
        return {
            "shapes": entries,
            "conditioned": model.k > 0,
            "feature_names": list(model.feature_names),
            "clamp": clamp_range(model) if model.k else {},
            "preview_resolution": PREVIEW_RESOLUTION,
            "final_resolution": FINAL_RESOLUTION,
        }

    @app.post("/reconstruct")
    def reconstruct(req: ReconstructRequest):
        model = model_or_503()
        res = resolve_resolution(req.resolution)
        try:
            code = model.code_for_shape(req.shape_id)
        except KeyError:
            raise ApiError(404, "unknown_shape",
                           f"shape id {req.shape_id!r} is not in this checkpoint")
        mesh = synthesize(model, code, res)
        return {"shape_id": req.shape_id, "resolution": res,
                "mesh": mesh_payload(mesh, payload_cap_bytes),
                "code": {"fixed": code.fixed.tolist(),
                         "trainable": code.trainable.tolist()}}

    @app.post("/generate")
    def generate(req: GenerateRequest):
        model = model_or_503()
        res = resolve_resolution(req.resolution)
        if req.overrides:
            unknown = set(req.overrides) - set(model.feature_names)
            if unknown:
                raise ApiError(400, "unknown_feature",
                               f"model is not conditioned on {sorted(unknown)}")
        shape = generate_cohort(model, state.sampler, 1, seed=req.seed or 0,
                                overrides=req.overrides or None,
                                resolution=res)[0]
        return {"seed": req.seed or 0, "resolution": res,
                "mesh": mesh_payload(shape.mesh, payload_cap_bytes),
                "code": {"fixed": shape.code.fixed.tolist(),
                         "trainable": shape.code.trainable.tolist()},
                "conditioned": shape.conditioned,
                "measured": _measured_dict(shape.measured),
                "extrapolated": shape.extrapolated}

    @app.post("/edit")
    def edit(req: EditRequest):
        model = model_or_503()
        res = resolve_resolution(req.resolution)
        if model.k == 0 and req.features:
            raise ApiError(409, "unconditioned_model",
                           "this checkpoint has no fixed feature conditioning")
        unknown = set(req.features) - set(model.feature_names)
        if unknown:
            raise ApiError(400, "unknown_feature",
                           f"model is not conditioned on {sorted(unknown)}")

        if isinstance(req.base, str):
            try:
                base_code = model.code_for_shape(req.base)
            except KeyError:
                raise ApiError(404, "unknown_shape",
                               f"shape id {req.base!r} is not in this checkpoint")
            base_key = ("shape", req.base, res)
        else:
            try:
                base_code = LatentCode(np.asarray(req.base["fixed"], dtype=float),
                                       np.asarray(req.base["trainable"], dtype=float))
            except (KeyError, TypeError, ValueError):
                raise ApiError(400, "malformed_request",
                               "base must be a shape id or {fixed, trainable}")
            if len(base_code) != model.input_dim - 3:
                raise ApiError(400, "bad_code_length",
                               f"code must have length {model.input_dim - 3}")
            base_key = ("code", base_code.full().tobytes(), res)

        overrides_key = tuple(sorted(req.features.items()))
        cached = state.cache_get(base_key, overrides_key)
        if cached is not None:
            return cached

        if req.features:
            step = edit_shape(model, base_code, [req.features], resolution=res)[0]
            mesh, measured = step.mesh, step.measured
            conditioned, clamped = step.conditioned, step.clamped
        else:
            mesh = synthesize(model, base_code, res)
            from .generation import measure_or_none
            measured = measure_or_none(mesh)
            conditioned = {}
            if model.k:
                raw = model.scaler.invert(base_code.fixed)
                conditioned = {n: float(raw[i])
                               for i, n in enumerate(model.feature_names)}
            clamped = False

        response = {"resolution": res,
                    "mesh": mesh_payload(mesh, payload_cap_bytes),
                    "conditioned": conditioned,
                    "measured": _measured_dict(measured),
                    "clamped": clamped}
        state.cache_put(base_key, overrides_key, response)
        return response

    if ui_dir is not None and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    if checkpoint is not None:
        state.load(checkpoint)
    return app
