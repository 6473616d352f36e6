"""FastAPI application implementing the encoder wire protocol.

See PROTOCOL.md at the repository root: /v1/info, /v1/embed_image,
/v1/embed_text, with {"error": str} bodies on 4xx/5xx, 413 for oversize
requests, and 503 while the model is loading. Embeddings are
L2-normalized server-side.
"""

from __future__ import annotations

import base64
import binascii
import json
import threading
from contextlib import asynccontextmanager
from dataclasses import dataclass

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .models import load_backend


@dataclass(frozen=True)
class ServiceConfig:
    model_spec: str = "tiny"
    device: str = "cpu"
    port: int = 8089
    max_request_bytes: int = 16 * 1024 * 1024
    max_batch: int = 8  # reserved for batched deployments


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})


def create_app(config: ServiceConfig | None = None, preload: bool = True) -> FastAPI:
    config = config or ServiceConfig()
    state = {"backend": None}
    lock = threading.Lock()

    def ensure_backend():
        with lock:
            if state["backend"] is None and preload:
                state["backend"] = load_backend(config.model_spec, device=config.device)
        return state["backend"]

    @asynccontextmanager
    async def lifespan(_app: FastAPI):
        ensure_backend()
        yield

    app = FastAPI(title="encoder-service", lifespan=lifespan)
    app.state.ensure_backend = ensure_backend
    app.state.config = config

    @app.middleware("http")
    async def limit_size(request: Request, call_next):
        length = request.headers.get("content-length")
        if length and int(length) > config.max_request_bytes:
            return _error(413, f"request exceeds {config.max_request_bytes} bytes")
        return await call_next(request)

    async def _payload(request: Request) -> dict | JSONResponse:
        body = await request.body()
        if len(body) > config.max_request_bytes:
            return _error(413, f"request exceeds {config.max_request_bytes} bytes")
        try:
            payload = json.loads(body)
        except (ValueError, UnicodeDecodeError):
            return _error(400, "body is not valid JSON")
        if not isinstance(payload, dict):
            return _error(400, "body must be a JSON object")
        return payload

    def _respond(vec: np.ndarray, backend) -> JSONResponse:
        norm = float(np.linalg.norm(vec))
        if norm == 0.0 or not np.isfinite(norm):
            return _error(500, "model produced a non-normalizable embedding")
        unit = vec / norm
        return JSONResponse(
            {
                "embedding": [float(x) for x in unit],
                "dim": int(unit.size),
                "model": backend.name,
            }
        )

    @app.get("/v1/info")
    def info():
        backend = ensure_backend()
        if backend is None:
            return _error(503, "model not loaded")
        return {
            "dim": backend.dim,
            "model": backend.name,
            "preprocessing": backend.preprocessing,
        }

    @app.post("/v1/embed_text")
    async def embed_text(request: Request):
        backend = ensure_backend()
        if backend is None:
            return _error(503, "model not loaded")
        payload = await _payload(request)
        if isinstance(payload, JSONResponse):
            return payload
        text = payload.get("text")
        if not isinstance(text, str):
            return _error(400, "missing or invalid 'text'")
        return _respond(backend.embed_text(text), backend)

    @app.post("/v1/embed_image")
    async def embed_image(request: Request):
        backend = ensure_backend()
        if backend is None:
            return _error(503, "model not loaded")
        payload = await _payload(request)
        if isinstance(payload, JSONResponse):
            return payload
        b64 = payload.get("image_b64")
        if not isinstance(b64, str):
            return _error(400, "missing or invalid 'image_b64'")
        try:
            raw = base64.b64decode(b64, validate=True)
        except (binascii.Error, ValueError):
            return _error(400, "image_b64 is not valid base64")
        try:
            vec = backend.embed_image(raw)
        except Exception:
            return _error(400, "could not decode image payload")
        return _respond(vec, backend)

    return app
