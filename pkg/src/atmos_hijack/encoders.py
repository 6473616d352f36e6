"""Embedding backends behind one contract.

Three implementations share the interface: a deterministic toy encoder for
desk-scale verification, a precomputed vector store, and an HTTP client
for a remote encoder service. All of them return unit-norm float64
vectors; everything downstream assumes cosine similarity is a plain dot
product.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import os
import struct
import threading
import time
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from . import lexicon
from .imaging import Image, luminance
from .prng import SplitMix64, fnv1a64, mix64
from .lexicon import BRIGHTNESS_WORDS, SCENE_WORDS, WEATHER_KEYWORDS

TOY_DIM = 64
TOY_PROJECTION_SEED = 7
RESERVED_WEIGHT = 4.0

# Reserved embedding dimensions couple image statistics to text lexicon
# groups. Image side: dims 58..63 receive mean red, mean green, mean blue,
# luminance std, mean |laplacian|, and bright-veil coverage. Text side:
# atmospheric vocabulary anchors on the veil dim (near zero for ordinary
# scenes, large under cloud overlays) and ground-object nouns anchor on
# the contrast dim - channel means stay text-free because they are large
# for every image and would couple weather texts to everything.
DIM_RESERVED_START = 58
DIM_SCENE = 61  # image: luminance std / text: scene nouns
DIM_SHARPNESS = 62  # image: mean |laplacian| (no text group)
DIM_CLOUD = 63  # image: bright-veil coverage / text: atmospheric words

_TEXT_GROUP_DIMS = (
    (WEATHER_KEYWORDS[lexicon.WEATHER_CLOUD], DIM_CLOUD),
    (WEATHER_KEYWORDS[lexicon.WEATHER_FOG_HAZE], DIM_CLOUD),
    (WEATHER_KEYWORDS[lexicon.WEATHER_SMOKE_MIST], DIM_CLOUD),
    (BRIGHTNESS_WORDS, DIM_CLOUD),
    (SCENE_WORDS, DIM_SCENE),
)

_TEXT_HASH_SALT = 0x5DEECE66D
_VEIL_THRESHOLD = 0.8


class EncoderError(Exception):
    """Base class for embedding failures."""


class ConnectionFailed(EncoderError):
    def __init__(self, msg: str, retries: int = 0):
        super().__init__(msg)
        self.retries = retries


class DimMismatch(EncoderError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"embedding dim mismatch: expected {expected}, got {got}")
        self.expected = expected
        self.got = got


class MalformedResponse(EncoderError):
    pass


class MissingKey(EncoderError):
    pass


@dataclass(frozen=True)
class EncoderDescriptor:
    kind: str  # toy | precomputed | remote
    dim: int
    identity: str
    concurrency_safe: bool

    def __post_init__(self):
        if self.dim <= 0:
            raise ValueError("dim must be positive")


def normalize(raw) -> np.ndarray:
    """Project onto the unit sphere; zero vectors are an error."""
    v = np.asarray(raw, dtype=np.float64).reshape(-1)
    n = float(np.linalg.norm(v))
    if n == 0.0 or not np.isfinite(n):
        raise EncoderError("cannot normalize zero or non-finite vector")
    return v / n


def _box_downsample_8(lum: np.ndarray) -> np.ndarray:
    """8x8 grid of cell means; cell edges at floor(i*n/8)."""
    h, w = lum.shape
    ys = [h * i // 8 for i in range(9)]
    xs = [w * i // 8 for i in range(9)]
    grid = np.empty((8, 8), dtype=np.float64)
    for i in range(8):
        for j in range(8):
            grid[i, j] = lum[ys[i] : ys[i + 1], xs[j] : xs[j + 1]].mean()
    return grid


def _mean_abs_laplacian(lum: np.ndarray) -> float:
    up = np.roll(lum, 1, axis=0)
    up[0] = lum[1]
    down = np.roll(lum, -1, axis=0)
    down[-1] = lum[-2]
    left = np.roll(lum, 1, axis=1)
    left[:, 0] = lum[:, 1]
    right = np.roll(lum, -1, axis=1)
    right[:, -1] = lum[:, -2]
    return float(np.abs(up + down + left + right - 4.0 * lum).mean())


def image_features(img: Image) -> np.ndarray:
    """70 raw features: 8x8 luminance grid then the 6 global statistics."""
    lum = luminance(img.pixels)
    grid = _box_downsample_8(lum).reshape(-1)
    stats = np.array(
        [
            float(img.pixels[..., 0].mean()),
            float(img.pixels[..., 1].mean()),
            float(img.pixels[..., 2].mean()),
            float(lum.std()),
            _mean_abs_laplacian(lum),
            float((lum > _VEIL_THRESHOLD).mean()),
        ]
    )
    return np.concatenate([grid, stats])


# Grid-projection magnitude relative to the +-1 matrix. Balances the
# token-bag channel against the reserved statistics: statistics dominate
# embedding direction, while bag alignment still decides close ranks.
_PROJECTION_SCALE = 0.175


def _projection_matrix(seed: int) -> np.ndarray:
    rng = SplitMix64(seed)
    signs = np.where(rng.floats(TOY_DIM * TOY_DIM) < 0.5, 1.0, -1.0)
    proj = signs.reshape(TOY_DIM, TOY_DIM) * _PROJECTION_SCALE
    # reserved dims carry only the weighted statistics: projection noise
    # there would drown the weak atmospheric signals of mild overlays
    proj[DIM_RESERVED_START:] = 0.0
    return proj


class ToyEncoder:
    """Deterministic ML-free encoder over a 64-dim space.

    Images: the luminance grid goes through a fixed seeded +-1 projection
    spanning dims 0..57, and six global statistics land on reserved dims
    58..63 with weight 4. Texts: a signed hash-bag over dims 0..57 plus
    lexicon-group counts on the same reserved dims. Weather texts
    therefore sit near bright, smooth, veiled images by construction.
    """

    def __init__(self, projection_seed: int = TOY_PROJECTION_SEED):
        self.projection_seed = projection_seed
        self._proj = _projection_matrix(projection_seed)
        self.image_calls = 0
        self.text_calls = 0
        self._lock = threading.Lock()

    @property
    def descriptor(self) -> EncoderDescriptor:
        return EncoderDescriptor(
            kind="toy",
            dim=TOY_DIM,
            identity=f"toy-v1/proj{self.projection_seed}",
            concurrency_safe=True,
        )

    def encode_image(self, img: Image) -> np.ndarray:
        with self._lock:
            self.image_calls += 1
        feats = image_features(img)
        emb = self._proj @ feats[:TOY_DIM]
        emb[DIM_RESERVED_START:] += RESERVED_WEIGHT * feats[TOY_DIM:]
        return normalize(emb)

    def encode_text(self, text: str) -> np.ndarray:
        with self._lock:
            self.text_calls += 1
        emb = np.zeros(TOY_DIM, dtype=np.float64)
        tokens = lexicon.tokenize(text)
        for tok in tokens:
            h = mix64(fnv1a64(tok) ^ _TEXT_HASH_SALT)
            dim = h % DIM_RESERVED_START
            sign = 1.0 if (h >> 8) & 1 else -1.0
            emb[dim] += sign
        for words, dim in _TEXT_GROUP_DIMS:
            count = sum(tok in words for tok in tokens)
            emb[dim] += RESERVED_WEIGHT * count
        return normalize(emb)


def image_content_key(img: Image) -> str:
    """Content hash over the 8-bit pixels, stable across save/load."""
    q = img.to_uint8()
    head = struct.pack("<II", img.height, img.width)
    return "img:" + hashlib.sha256(head + q.tobytes()).hexdigest()


def text_content_key(text: str) -> str:
    return "txt:" + hashlib.sha256(text.encode("utf-8")).hexdigest()


SIDE_CAR_MAGIC = b"AHC1"


def write_vectors_sidecar(path: str | os.PathLike, vectors: np.ndarray) -> None:
    """Binary vector block: magic, u32 count, u32 dim, float32 little-endian."""
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise ValueError("expected (count, dim) vectors")
    with open(path, "wb") as fh:
        fh.write(SIDE_CAR_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_vectors_sidecar(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SIDE_CAR_MAGIC:
            raise ValueError(f"bad sidecar magic {magic!r}")
        count, dim = struct.unpack("<II", fh.read(8))
        data = fh.read(count * dim * 4)
    if len(data) != count * dim * 4:
        raise ValueError("truncated sidecar")
    return np.frombuffer(data, dtype="<f4").reshape(count, dim).copy()


class PrecomputedStore:
    """Embeddings keyed by id or content hash, loadable from disk."""

    def __init__(self, vectors: dict[str, np.ndarray], identity: str = "precomputed"):
        if not vectors:
            raise ValueError("empty store")
        dims = {v.shape[-1] for v in vectors.values()}
        if len(dims) != 1:
            raise ValueError(f"inconsistent dims in store: {sorted(dims)}")
        self.dim = dims.pop()
        self.identity = identity
        self._vectors = {k: np.asarray(v, dtype=np.float64) for k, v in vectors.items()}

    def lookup(self, key: str) -> np.ndarray:
        try:
            return normalize(self._vectors[key])
        except KeyError:
            raise MissingKey(f"no embedding stored for key {key!r}") from None

    def __contains__(self, key: str) -> bool:
        return key in self._vectors

    def save(self, path: str | os.PathLike) -> None:
        """Manifest JSON next to an AHC1 sidecar holding the raw float32s."""
        keys = sorted(self._vectors)
        sidecar = os.fspath(path) + ".ahc1"
        write_vectors_sidecar(sidecar, np.stack([self._vectors[k] for k in keys]))
        manifest = {
            "format": "precomputed-store",
            "identity": self.identity,
            "dim": int(self.dim),
            "keys": keys,
            "vectors": os.path.basename(sidecar),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)

    @staticmethod
    def load(path: str | os.PathLike) -> "PrecomputedStore":
        with open(path, encoding="utf-8") as fh:
            manifest = json.load(fh)
        sidecar = os.path.join(os.path.dirname(os.fspath(path)) or ".", manifest["vectors"])
        vecs = read_vectors_sidecar(sidecar)
        keys = manifest["keys"]
        if len(keys) != vecs.shape[0]:
            raise ValueError("manifest/sidecar count mismatch")
        return PrecomputedStore(
            {k: vecs[i] for i, k in enumerate(keys)},
            identity=manifest.get("identity", "precomputed"),
        )


class PrecomputedEncoder:
    """Encoder facade over a store: images by content hash, texts by hash or id."""

    def __init__(self, store: PrecomputedStore):
        self.store = store

    @property
    def descriptor(self) -> EncoderDescriptor:
        return EncoderDescriptor(
            kind="precomputed",
            dim=self.store.dim,
            identity=self.store.identity,
            concurrency_safe=True,
        )

    def encode_image(self, img: Image) -> np.ndarray:
        return self.store.lookup(image_content_key(img))

    def encode_text(self, text: str) -> np.ndarray:
        key = text_content_key(text)
        if key in self.store:
            return self.store.lookup(key)
        return self.store.lookup(text)


def png_bytes(img: Image) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(img.to_uint8(), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


class RemoteEncoder:
    """HTTP client for the encoder service wire protocol.

    Transient failures (connection errors, timeouts, 5xx) retry with
    exponential backoff up to `retries` attempts; 4xx responses and
    malformed bodies fail immediately. Concurrent in-flight requests are
    capped.
    """

    def __init__(
        self,
        base_url: str,
        retries: int = 3,
        backoff: float = 0.25,
        timeout: float = 30.0,
        max_inflight: int = 4,
        session=None,
    ):
        import requests

        self.base_url = base_url.rstrip("/")
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._sem = threading.BoundedSemaphore(max_inflight)
        self._session = session or requests.Session()
        self._requests = requests
        self.last_retries = 0
        self.total_retries = 0
        info = self._request("GET", "/v1/info", None)
        self._dim = int(info["dim"])
        self._model = str(info.get("model", "unknown"))

    @property
    def descriptor(self) -> EncoderDescriptor:
        return EncoderDescriptor(
            kind="remote", dim=self._dim, identity=self._model, concurrency_safe=True
        )

    def _request(self, method: str, route: str, payload) -> dict:
        url = self.base_url + route
        attempts = 0
        last_err = "no attempt made"
        while attempts <= self.retries:
            if attempts:
                time.sleep(self.backoff * (2 ** (attempts - 1)))
            try:
                with self._sem:
                    resp = self._session.request(
                        method, url, json=payload, timeout=self.timeout
                    )
            except self._requests.RequestException as exc:
                attempts += 1
                last_err = str(exc)
                continue
            if resp.status_code >= 500:
                attempts += 1
                last_err = f"HTTP {resp.status_code}"
                continue
            self.last_retries = attempts
            self.total_retries += attempts
            if resp.status_code != 200:
                try:
                    detail = resp.json().get("error", resp.text)
                except ValueError:
                    detail = resp.text
                raise EncoderError(f"service rejected request ({resp.status_code}): {detail}")
            try:
                return resp.json()
            except ValueError as exc:
                raise MalformedResponse(f"non-JSON response from {url}") from exc
        self.last_retries = attempts
        self.total_retries += attempts
        raise ConnectionFailed(
            f"{url} unreachable after {attempts} attempts: {last_err}", retries=attempts
        )

    def _embedding_from(self, body: dict) -> np.ndarray:
        if "embedding" not in body:
            raise MalformedResponse(f"missing 'embedding' in response keys {sorted(body)}")
        vec = np.asarray(body["embedding"], dtype=np.float64)
        if vec.ndim != 1 or (body.get("dim") is not None and int(body["dim"]) != vec.size):
            raise MalformedResponse("embedding shape disagrees with declared dim")
        if vec.size != self._dim:
            raise DimMismatch(self._dim, vec.size)
        return normalize(vec)

    def encode_image(self, img: Image) -> np.ndarray:
        b64 = base64.b64encode(png_bytes(img)).decode("ascii")
        return self._embedding_from(
            self._request("POST", "/v1/embed_image", {"image_b64": b64})
        )

    def encode_text(self, text: str) -> np.ndarray:
        return self._embedding_from(
            self._request("POST", "/v1/embed_text", {"text": text})
        )


ENCODER_URL_ENV = "ATMOS_HIJACK_ENCODER_URL"


def make_encoder(spec: str):
    """Build an encoder from a CLI spec string.

    Forms: `toy`, `toy:<projection_seed>`, `precomputed:<path>`,
    `remote[:<url>]` (URL defaults to $ATMOS_HIJACK_ENCODER_URL).
    """
    if spec == "toy":
        return ToyEncoder()
    if spec.startswith("toy:"):
        return ToyEncoder(projection_seed=int(spec.split(":", 1)[1]))
    if spec.startswith("precomputed:"):
        return PrecomputedEncoder(PrecomputedStore.load(spec.split(":", 1)[1]))
    if spec == "remote" or spec.startswith("remote:"):
        url = spec.split(":", 1)[1] if ":" in spec else os.environ.get(ENCODER_URL_ENV, "")
        if not url:
            raise ValueError(f"remote encoder needs a URL or ${ENCODER_URL_ENV}")
        return RemoteEncoder(url)
    raise ValueError(f"unknown encoder spec {spec!r}")
