"""Denoiser backends: resolution by name and the HTTP wire client.

Wire protocol (JSON over HTTP):
  POST /session       {prompt, guidance_scale, steps, seed} -> {session}
  POST /encode        {session, image: T}                   -> {latent: T}
  POST /decode        {session, latent: T}                  -> {image: T}
  POST /add_noise     {session, latent: T, step}            -> {latent: T}
  POST /denoise_step  {session, latent: T, step, mode, depth?: T, mask?: T}
                                                            -> {latent: T}
  GET  /health                                              -> {status}
  GET  /meta          -> {engine, channels, downsample, modes}

where T = {"data": base64 of little-endian float32, "shape": [...]}.
The server answers 400 for missing conditioning or bad shapes, 409 for a
step outside the session's range, 503 while still warming up.
"""

from __future__ import annotations

import base64
import time

import httpx
import numpy as np

from texforge.errors import BackendError
from texforge.sampler import Conditioning, DenoiserBackend, MockDenoiser


def encode_tensor(arr: np.ndarray) -> dict:
    a = np.ascontiguousarray(arr, dtype="<f4")
    return {"data": base64.b64encode(a.tobytes()).decode("ascii"), "shape": list(a.shape)}


def decode_tensor(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    shape = tuple(int(s) for s in obj["shape"])
    arr = np.frombuffer(raw, dtype="<f4")
    if arr.size != int(np.prod(shape)):
        raise BackendError(f"tensor payload {arr.size} values, shape says {shape}")
    return arr.reshape(shape).astype(np.float32)


class HttpDenoiserBackend(DenoiserBackend):
    """Client for a denoiser service speaking the wire protocol above.

    A pre-built httpx client can be injected, which is how tests run the
    service in-process without sockets.
    """

    def __init__(self, base_url: str, client: httpx.Client | None = None, timeout: float = 60.0):
        self.base_url = base_url.rstrip("/")
        self.client = client or httpx.Client(base_url=self.base_url, timeout=timeout)
        self.session_id: str | None = None

    def _request(self, method: str, path: str, payload: dict | None = None) -> dict:
        try:
            if method == "GET":
                resp = self.client.get(path)
            else:
                resp = self.client.post(path, json=payload)
        except httpx.HTTPError as exc:
            raise BackendError(f"backend unreachable: {exc}") from exc
        if resp.status_code >= 400:
            detail = ""
            try:
                detail = resp.json().get("detail", "")
            except Exception:
                detail = resp.text[:200]
            raise BackendError(f"backend {path} failed ({resp.status_code}): {detail}")
        return resp.json()

    def wait_ready(self, timeout: float = 10.0, interval: float = 0.2) -> None:
        deadline = time.monotonic() + timeout
        while True:
            try:
                if self._request("GET", "/health").get("status") == "ok":
                    return
            except BackendError:
                pass
            if time.monotonic() >= deadline:
                raise BackendError(f"backend not ready within {timeout}s")
            time.sleep(interval)

    def meta(self) -> dict:
        return self._request("GET", "/meta")

    def open(self, cond: Conditioning) -> None:
        self.wait_ready()
        info = self.meta()
        self.channels = int(info.get("channels", self.channels))
        self.downsample = int(info.get("downsample", self.downsample))
        out = self._request(
            "POST",
            "/session",
            {
                "prompt": cond.prompt,
                "guidance_scale": cond.guidance_scale,
                "steps": cond.steps,
                "seed": cond.seed,
            },
        )
        self.session_id = out["session"]

    def _session(self) -> str:
        if self.session_id is None:
            raise BackendError("no session opened")
        return self.session_id

    def encode(self, image: np.ndarray) -> np.ndarray:
        out = self._request(
            "POST", "/encode", {"session": self._session(), "image": encode_tensor(image)}
        )
        return decode_tensor(out["latent"])

    def decode(self, latent: np.ndarray) -> np.ndarray:
        out = self._request(
            "POST", "/decode", {"session": self._session(), "latent": encode_tensor(latent)}
        )
        return decode_tensor(out["image"])

    def add_noise(self, latent: np.ndarray, step: int) -> np.ndarray:
        out = self._request(
            "POST",
            "/add_noise",
            {"session": self._session(), "latent": encode_tensor(latent), "step": int(step)},
        )
        return decode_tensor(out["latent"])

    def denoise_step(self, latent, step, mode, depth=None, mask=None):
        payload = {
            "session": self._session(),
            "latent": encode_tensor(latent),
            "step": int(step),
            "mode": mode,
        }
        if depth is not None:
            payload["depth"] = encode_tensor(depth)
        if mask is not None:
            payload["mask"] = encode_tensor(mask)
        out = self._request("POST", "/denoise_step", payload)
        return decode_tensor(out["latent"])

    def close(self) -> None:
        self.client.close()


def resolve_backend(spec: str, client: httpx.Client | None = None) -> DenoiserBackend:
    """Backend from a config string: "mock" or an http(s) URL."""
    if spec == "mock":
        return MockDenoiser()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpDenoiserBackend(spec, client=client)
    raise BackendError(f"unknown backend {spec!r} (use 'mock' or a service URL)")
