"""Tensor wire codec and the HTTP backend client.

The client is exercised against an in-process transport that speaks the
wire protocol over the local mock denoiser, so every byte that would cross
the network does so here, without sockets.
"""

import json

import httpx
import numpy as np
import pytest

from texforge.backends import (
    HttpDenoiserBackend,
    decode_tensor,
    encode_tensor,
    resolve_backend,
)
from texforge.errors import BackendError
from texforge.sampler import Conditioning, MockDenoiser, SamplingSchedule, sample_view
from texforge.trimap import GENERATE, KEEP


class WireService:
    """Minimal in-memory server implementing the denoiser wire protocol."""

    def __init__(self, warmup_failures: int = 0):
        self.inner = MockDenoiser()
        self.sessions: dict[str, Conditioning] = {}
        self.health_calls = 0
        self.warmup_failures = warmup_failures
        self.requests: list[str] = []

    def transport(self) -> httpx.MockTransport:
        return httpx.MockTransport(self.handle)

    def handle(self, request: httpx.Request) -> httpx.Response:
        path = request.url.path
        self.requests.append(path)
        if path == "/health":
            self.health_calls += 1
            if self.health_calls <= self.warmup_failures:
                return httpx.Response(503, json={"detail": "warming up"})
            return httpx.Response(200, json={"status": "ok"})
        if path == "/meta":
            return httpx.Response(200, json={
                "engine": "mock", "channels": 3, "downsample": 8,
                "modes": ["depth", "inpaint"],
            })
        body = json.loads(request.read())
        if path == "/session":
            cond = Conditioning(
                prompt=body["prompt"], guidance_scale=body["guidance_scale"],
                steps=body["steps"], seed=body["seed"],
            )
            sid = f"s{len(self.sessions)}"
            self.sessions[sid] = cond
            self.inner.open(cond)
            return httpx.Response(200, json={"session": sid})

        if body.get("session") not in self.sessions:
            return httpx.Response(400, json={"detail": "unknown session"})
        try:
            if path == "/encode":
                out = self.inner.encode(decode_tensor(body["image"]))
                return httpx.Response(200, json={"latent": encode_tensor(out)})
            if path == "/decode":
                out = self.inner.decode(decode_tensor(body["latent"]))
                return httpx.Response(200, json={"image": encode_tensor(out)})
            if path == "/add_noise":
                out = self.inner.add_noise(decode_tensor(body["latent"]), body["step"])
                return httpx.Response(200, json={"latent": encode_tensor(out)})
            if path == "/denoise_step":
                depth = decode_tensor(body["depth"]) if "depth" in body else None
                mask = decode_tensor(body["mask"]) if "mask" in body else None
                out = self.inner.denoise_step(
                    decode_tensor(body["latent"]), body["step"], body["mode"],
                    depth=depth, mask=mask,
                )
                return httpx.Response(200, json={"latent": encode_tensor(out)})
        except BackendError as exc:
            status = 409 if exc.step is not None else 400
            return httpx.Response(status, json={"detail": str(exc)})
        return httpx.Response(404, json={"detail": f"no route {path}"})


def make_client(service: WireService) -> HttpDenoiserBackend:
    client = httpx.Client(transport=service.transport(), base_url="http://denoiser.test")
    return HttpDenoiserBackend("http://denoiser.test", client=client)


class TestTensorCodec:
    def test_round_trip_exact(self):
        rng = np.random.default_rng(0)
        for shape in ((7,), (3, 4), (3, 8, 8)):
            arr = rng.standard_normal(shape).astype(np.float32)
            back = decode_tensor(encode_tensor(arr))
            np.testing.assert_array_equal(back, arr)
            assert back.dtype == np.float32

    def test_payload_is_little_endian_f32(self):
        arr = np.array([1.0, -2.5], dtype=np.float32)
        import base64

        raw = base64.b64decode(encode_tensor(arr)["data"])
        np.testing.assert_array_equal(np.frombuffer(raw, dtype="<f4"), arr)

    def test_other_dtypes_converted(self):
        arr = np.array([[0.5, 0.25]], dtype=np.float64)
        obj = encode_tensor(arr)
        np.testing.assert_array_equal(decode_tensor(obj), arr.astype(np.float32))

    def test_shape_mismatch_rejected(self):
        obj = encode_tensor(np.zeros((2, 2), np.float32))
        obj["shape"] = [3, 3]
        with pytest.raises(BackendError):
            decode_tensor(obj)


class TestResolveBackend:
    def test_mock(self):
        assert isinstance(resolve_backend("mock"), MockDenoiser)

    def test_url(self):
        b = resolve_backend("http://denoiser.test:9000/")
        assert isinstance(b, HttpDenoiserBackend)
        assert b.base_url == "http://denoiser.test:9000"
        b.close()

    def test_unknown(self):
        with pytest.raises(BackendError):
            resolve_backend("cuda:0")


class TestHttpBackend:
    def test_open_negotiates_meta_and_session(self):
        svc = WireService()
        be = make_client(svc)
        be.open(Conditioning(prompt="p", steps=10, seed=1))
        assert be.session_id == "s0"
        assert be.channels == 3 and be.downsample == 8
        assert "/meta" in svc.requests and "/session" in svc.requests

    def test_requires_session(self):
        be = make_client(WireService())
        with pytest.raises(BackendError):
            be.encode(np.zeros((8, 8, 3), np.float32))

    def test_parity_with_local_mock(self):
        """Every operation through the wire equals the in-process result."""
        svc = WireService()
        remote = make_client(svc)
        local = MockDenoiser()
        cond = Conditioning(prompt="a copper kettle", steps=20, seed=5)
        remote.open(cond)
        local.open(cond)

        rng = np.random.default_rng(1)
        img = rng.random((32, 32, 3)).astype(np.float32)
        z_r, z_l = remote.encode(img), local.encode(img)
        np.testing.assert_array_equal(z_r, z_l)
        np.testing.assert_array_equal(remote.add_noise(z_r, 3), local.add_noise(z_l, 3))
        depth = np.full((32, 32), 0.6, np.float32)
        np.testing.assert_array_equal(
            remote.denoise_step(z_r, 2, "depth", depth=depth),
            local.denoise_step(z_l, 2, "depth", depth=depth),
        )
        mask = np.zeros((4, 4), np.float32)
        mask[2:, :] = 1.0
        np.testing.assert_array_equal(
            remote.denoise_step(z_r, 12, "inpaint", mask=mask),
            local.denoise_step(z_l, 12, "inpaint", mask=mask),
        )
        np.testing.assert_array_equal(remote.decode(z_r), local.decode(z_l))

    def test_full_sampling_loop_parity(self):
        svc = WireService()
        remote = make_client(svc)
        local = MockDenoiser()
        cond = Conditioning(prompt="a painted drum", steps=8, seed=2)
        remote.open(cond)
        local.open(cond)
        schedule = SamplingSchedule(steps=8, inpaint_start=2, inpaint_end=4,
                                    checker_cutoff=5)
        rng = np.random.default_rng(3)
        q = rng.random((32, 32, 3)).astype(np.float32)
        labels = np.full((32, 32), KEEP, np.int8)
        labels[:, 16:] = GENERATE
        depth = np.full((32, 32), 0.5, np.float32)
        out_r, info_r = sample_view(remote, schedule, q, labels, depth)
        out_l, info_l = sample_view(local, schedule, q, labels, depth)
        np.testing.assert_array_equal(out_r, out_l)
        assert info_r.backend_calls == info_l.backend_calls == 3 + 2 * 8

    def test_missing_conditioning_maps_to_error(self):
        svc = WireService()
        be = make_client(svc)
        be.open(Conditioning(prompt="p", steps=10))
        z = np.zeros((3, 4, 4), np.float32)
        with pytest.raises(BackendError) as exc:
            be.denoise_step(z, 0, "depth")  # no depth map
        assert "400" in str(exc.value)

    def test_step_out_of_range_maps_to_conflict(self):
        svc = WireService()
        be = make_client(svc)
        be.open(Conditioning(prompt="p", steps=10))
        with pytest.raises(BackendError) as exc:
            be.add_noise(np.zeros((3, 4, 4), np.float32), 99)
        assert "409" in str(exc.value)

    def test_wait_ready_retries_through_warmup(self):
        svc = WireService(warmup_failures=2)
        be = make_client(svc)
        be.wait_ready(timeout=5.0, interval=0.01)
        assert svc.health_calls == 3

    def test_wait_ready_times_out(self):
        svc = WireService(warmup_failures=10**9)
        be = make_client(svc)
        with pytest.raises(BackendError):
            be.wait_ready(timeout=0.05, interval=0.01)

    def test_unreachable_host(self):
        def explode(request):
            raise httpx.ConnectError("boom", request=request)

        client = httpx.Client(transport=httpx.MockTransport(explode),
                              base_url="http://denoiser.test")
        be = HttpDenoiserBackend("http://denoiser.test", client=client)
        be.session_id = "s0"
        with pytest.raises(BackendError):
            be.encode(np.zeros((8, 8, 3), np.float32))
