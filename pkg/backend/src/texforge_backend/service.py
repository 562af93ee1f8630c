"""HTTP face of the denoiser: sessions in, latents out.

Status mapping: 400 for anything malformed (bad tensors, unknown session,
missing conditioning, invalid body), 409 for a sampling step outside the
session's range, 503 while the model is still warming up.
"""

from __future__ import annotations

import threading

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

import texforge_backend
from texforge_backend.engine import EngineError, SessionParams, resolve_engine
from texforge_backend.wire import WireError, decode_tensor, encode_tensor


class SessionRequest(BaseModel):
    prompt: str
    guidance_scale: float = 7.5
    steps: int = Field(default=50, ge=1)
    seed: int = 0


class EncodeRequest(BaseModel):
    session: str
    image: dict


class DecodeRequest(BaseModel):
    session: str
    latent: dict


class AddNoiseRequest(BaseModel):
    session: str
    latent: dict
    step: int


class DenoiseRequest(BaseModel):
    session: str
    latent: dict
    step: int
    mode: str
    depth: dict | None = None
    mask: dict | None = None


class _Registry:
    """Live sessions; distinct sessions may run concurrently, calls within
    one session are serialized on its lock."""

    def __init__(self, engine_cls):
        self.engine_cls = engine_cls
        self._sessions: dict[str, tuple] = {}
        self._lock = threading.Lock()
        self._counter = 0

    def create(self, params: SessionParams) -> str:
        with self._lock:
            self._counter += 1
            sid = f"s{self._counter:08d}"
            self._sessions[sid] = (self.engine_cls(params), threading.Lock())
        return sid

    def get(self, sid: str):
        with self._lock:
            entry = self._sessions.get(sid)
        if entry is None:
            raise HTTPException(status_code=400, detail=f"unknown session {sid!r}")
        return entry


def create_app(model: str = "deterministic", warmup_requests: int = 0) -> FastAPI:
    """Service around one engine type.

    ``warmup_requests``: number of requests answered 503 before the service
    reports ready; stands in for model loading time deterministically.
    """
    engine_cls = resolve_engine(model)
    registry = _Registry(engine_cls)
    app = FastAPI(title="texforge-backend", version=texforge_backend.__version__)
    remaining_warmup = {"n": int(warmup_requests)}

    @app.exception_handler(RequestValidationError)
    async def invalid_body(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    def gate():
        if remaining_warmup["n"] > 0:
            remaining_warmup["n"] -= 1
            raise HTTPException(status_code=503, detail="model warming up")

    def run(sid: str, op, *args, **kwargs) -> np.ndarray:
        engine, lock = registry.get(sid)
        try:
            with lock:
                return getattr(engine, op)(*args, **kwargs)
        except EngineError as exc:
            status = 409 if exc.step is not None else 400
            raise HTTPException(status_code=status, detail=str(exc))

    def tensor(obj: dict, name: str) -> np.ndarray:
        try:
            return decode_tensor(obj)
        except WireError as exc:
            raise HTTPException(status_code=400, detail=f"{name}: {exc}")

    @app.get("/health")
    def health():
        if remaining_warmup["n"] > 0:
            remaining_warmup["n"] -= 1
            return JSONResponse(status_code=503, content={"status": "warming"})
        return {"status": "ok"}

    @app.get("/meta")
    def meta():
        gate()
        return {
            "engine": model,
            "channels": engine_cls.channels,
            "downsample": engine_cls.downsample,
            "modes": list(engine_cls.modes),
            "latent_shape": [engine_cls.channels, 512 // engine_cls.downsample,
                             512 // engine_cls.downsample],
            "default_steps": 50,
        }

    @app.post("/session")
    def open_session(req: SessionRequest):
        gate()
        sid = registry.create(SessionParams(
            prompt=req.prompt, guidance_scale=req.guidance_scale,
            steps=req.steps, seed=req.seed,
        ))
        return {
            "session": sid,
            "prompt": req.prompt,
            "guidance_scale": req.guidance_scale,
            "steps": req.steps,
            "seed": req.seed,
        }

    @app.post("/encode")
    def encode(req: EncodeRequest):
        gate()
        latent = run(req.session, "encode", tensor(req.image, "image"))
        return {"latent": encode_tensor(latent)}

    @app.post("/decode")
    def decode(req: DecodeRequest):
        gate()
        image = run(req.session, "decode", tensor(req.latent, "latent"))
        return {"image": encode_tensor(image)}

    @app.post("/add_noise")
    def add_noise(req: AddNoiseRequest):
        gate()
        latent = run(req.session, "add_noise", tensor(req.latent, "latent"), req.step)
        return {"latent": encode_tensor(latent)}

    @app.post("/denoise_step")
    def denoise_step(req: DenoiseRequest):
        gate()
        depth = tensor(req.depth, "depth") if req.depth is not None else None
        mask = tensor(req.mask, "mask") if req.mask is not None else None
        latent = run(req.session, "denoise_step", tensor(req.latent, "latent"),
                     req.step, req.mode, depth=depth, mask=mask)
        return {"latent": encode_tensor(latent)}

    return app
