"""Protocol conformance checks for encoder services.

`verify_encoder_service` drives a live (or mocked) service through the
wire protocol in PROTOCOL.md using the same client the attack harness
uses, and returns a list of human-readable problems (empty = conformant).
The service package reuses this against its own live instance.
"""

from __future__ import annotations

import numpy as np
import requests

from .encoders import EncoderError, RemoteEncoder
from .imaging import Image
from .prng import SplitMix64


def _sample_image() -> Image:
    px = SplitMix64(2024).floats(16 * 16 * 3).reshape(16, 16, 3)
    return Image(px).quantize8()


def verify_encoder_service(base_url: str, timeout: float = 30.0) -> list[str]:
    problems: list[str] = []
    try:
        client = RemoteEncoder(base_url, retries=1, backoff=0.2, timeout=timeout)
    except EncoderError as exc:
        return [f"handshake failed: {exc}"]

    dim = client.descriptor.dim
    if dim <= 0:
        problems.append(f"/v1/info advertised non-positive dim {dim}")

    try:
        t1 = client.encode_text("a cloudy scene over farmland")
        t2 = client.encode_text("a cloudy scene over farmland")
        if t1.shape != (dim,):
            problems.append(f"text embedding dim {t1.shape} != advertised {dim}")
        if abs(float(np.linalg.norm(t1)) - 1.0) > 1e-3:
            problems.append("text embedding not unit-norm within 1e-3")
        if not np.array_equal(t1, t2):
            problems.append("identical text requests returned different embeddings")
    except EncoderError as exc:
        problems.append(f"embed_text failed: {exc}")

    try:
        img = _sample_image()
        v1 = client.encode_image(img)
        v2 = client.encode_image(img)
        if v1.shape != (dim,):
            problems.append(f"image embedding dim {v1.shape} != advertised {dim}")
        if abs(float(np.linalg.norm(v1)) - 1.0) > 1e-3:
            problems.append("image embedding not unit-norm within 1e-3")
        if not np.array_equal(v1, v2):
            problems.append("identical image requests returned different embeddings")
    except EncoderError as exc:
        problems.append(f"embed_image failed: {exc}")

    # malformed payloads must fail fast with a 4xx and an error body
    for route, payload in (("/v1/embed_text", {}), ("/v1/embed_image", {"image_b64": "!!"})):
        resp = requests.post(base_url.rstrip("/") + route, json=payload, timeout=timeout)
        if not 400 <= resp.status_code < 500:
            problems.append(f"{route} with bad payload returned {resp.status_code}")
            continue
        try:
            if "error" not in resp.json():
                problems.append(f"{route} 4xx body lacks an 'error' field")
        except ValueError:
            problems.append(f"{route} 4xx body is not JSON")

    return problems
