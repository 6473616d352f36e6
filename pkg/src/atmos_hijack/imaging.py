"""Image representation, lossless I/O, and the signal transforms.

Images are float64 RGB arrays in [0, 1]. Every public operation preserves
that invariant and returns a new value; pixel buffers are frozen after
construction so images can be shared across worker threads.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

MIN_SIDE = 8  # smallest side supported (one JPEG block)


@dataclass(frozen=True)
class Image:
    """RGB image with channel intensities in [0, 1].

    `pixels` has shape (height, width, 3) and is made read-only on
    construction.
    """

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (h, w, 3) pixels, got {px.shape}")
        if px.shape[0] < MIN_SIDE or px.shape[1] < MIN_SIDE:
            raise ValueError(
                f"image {px.shape[0]}x{px.shape[1]} below minimum {MIN_SIDE}x{MIN_SIDE}"
            )
        if float(px.min()) < -1e-12 or float(px.max()) > 1.0 + 1e-12:
            raise ValueError("channel values outside [0, 1]")
        px = np.clip(px, 0.0, 1.0)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    def to_uint8(self) -> np.ndarray:
        """8-bit quantization, round half away from zero."""
        return np.floor(self.pixels * 255.0 + 0.5).astype(np.uint8)

    def quantize8(self) -> "Image":
        """Snap intensities to the 8-bit lattice (what saving then loading does)."""
        return Image(self.to_uint8().astype(np.float64) / 255.0)


def load_image(path: str | os.PathLike) -> Image:
    """Load a lossless raster file as an RGB image in [0, 1]."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such image: {path}")
    try:
        with PILImage.open(path) as im:
            im.load()
            if im.mode != "RGB":
                im = im.convert("RGB")
            arr = np.asarray(im, dtype=np.float64) / 255.0
    except PILImage.UnidentifiedImageError as exc:
        raise ValueError(f"unsupported raster format: {path}") from exc
    return Image(arr)


def save_image(img: Image, path: str | os.PathLike) -> None:
    """Write an 8-bit RGB PNG; load_image(save_image(x)) is identity at 8 bits."""
    parent = os.path.dirname(os.fspath(path)) or "."
    if not os.path.isdir(parent):
        raise FileNotFoundError(f"directory does not exist: {parent}")
    PILImage.fromarray(img.to_uint8(), mode="RGB").save(path, format="PNG")


def _resample_axis(arr: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    old_len = arr.shape[axis]
    if new_len == old_len:
        return arr
    if new_len == 1:
        coords = np.zeros(1)
    else:
        # corner-aligned: first and last samples hit the image corners
        coords = np.arange(new_len, dtype=np.float64) * (old_len - 1) / (new_len - 1)
    i0 = np.floor(coords).astype(np.int64)
    i0 = np.minimum(i0, old_len - 2) if old_len > 1 else i0 * 0
    frac = coords - i0
    lo = np.take(arr, i0, axis=axis)
    hi = np.take(arr, np.minimum(i0 + 1, old_len - 1), axis=axis)
    shape = [1] * arr.ndim
    shape[axis] = new_len
    f = frac.reshape(shape)
    return lo * (1.0 - f) + hi * f


def resize_bilinear(img: Image, new_h: int, new_w: int) -> Image:
    """Corner-aligned bilinear resize."""
    if new_h < MIN_SIDE or new_w < MIN_SIDE:
        raise ValueError(f"target {new_h}x{new_w} below minimum {MIN_SIDE}x{MIN_SIDE}")
    out = _resample_axis(img.pixels, new_h, axis=0)
    out = _resample_axis(out, new_w, axis=1)
    return Image(np.clip(out, 0.0, 1.0))


def _reflect_indices(n: int, radius: int) -> np.ndarray:
    """Index map for reflect padding (no edge repeat), valid for any radius."""
    idx = np.arange(-radius, n + radius)
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * n - 2
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def _gaussian_kernel(sigma: float) -> np.ndarray:
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return k / k.sum()


def _blur_axis(arr: np.ndarray, kernel: np.ndarray, axis: int) -> np.ndarray:
    radius = (len(kernel) - 1) // 2
    idx = _reflect_indices(arr.shape[axis], radius)
    padded = np.take(arr, idx, axis=axis)
    windows = np.lib.stride_tricks.sliding_window_view(padded, len(kernel), axis=axis)
    return np.tensordot(windows, kernel, axes=([-1], [0]))


def gaussian_blur(data, sigma: float):
    """Separable Gaussian blur with reflect borders; sigma 0 is identity.

    Accepts an Image or a 2-D float array (mask/field) and returns the
    same type. Kernel radius is ceil(3*sigma) and the kernel is
    renormalized to sum 1, so constant inputs pass through exactly.
    """
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    if sigma == 0:
        return data
    kernel = _gaussian_kernel(sigma)
    if isinstance(data, Image):
        out = _blur_axis(data.pixels, kernel, axis=0)
        out = _blur_axis(out, kernel, axis=1)
        return Image(np.clip(out, 0.0, 1.0))
    arr = np.asarray(data, dtype=np.float64)
    out = _blur_axis(arr, kernel, axis=0)
    return _blur_axis(out, kernel, axis=1)


# --- JPEG distortion simulation -------------------------------------------
#
# The robustness experiments only need JPEG's quantization distortion, so
# the lossless stages (entropy coding, chroma subsampling) are omitted:
# RGB -> YCbCr, per-channel 8x8 block DCT-II, Annex-K table quantization
# with the conventional quality scaling, inverse transform, clip.

QUANT_LUMA = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.float64,
)

QUANT_CHROMA = np.array(
    [
        [17, 18, 24, 47, 99, 99, 99, 99],
        [18, 21, 26, 66, 99, 99, 99, 99],
        [24, 26, 56, 99, 99, 99, 99, 99],
        [47, 66, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
        [99, 99, 99, 99, 99, 99, 99, 99],
    ],
    dtype=np.float64,
)


def scaled_quant_table(table: np.ndarray, quality: int) -> np.ndarray:
    if not 1 <= quality <= 100:
        raise ValueError(f"quality must be in 1..100, got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    return np.clip(np.floor((table * scale + 50.0) / 100.0), 1.0, 255.0)


def _dct_matrix() -> np.ndarray:
    n = 8
    k = np.arange(n).reshape(-1, 1)
    x = np.arange(n).reshape(1, -1)
    m = np.sqrt(2.0 / n) * np.cos((2 * x + 1) * k * np.pi / (2 * n))
    m[0, :] = np.sqrt(1.0 / n)
    return m


_DCT = _dct_matrix()


def _rgb_to_ycbcr(px: np.ndarray) -> np.ndarray:
    r, g, b = px[..., 0], px[..., 1], px[..., 2]
    y = 0.299 * r + 0.587 * g + 0.114 * b
    cb = -0.168736 * r - 0.331264 * g + 0.5 * b + 0.5
    cr = 0.5 * r - 0.418688 * g - 0.081312 * b + 0.5
    return np.stack([y, cb, cr], axis=-1)


def _ycbcr_to_rgb(px: np.ndarray) -> np.ndarray:
    y, cb, cr = px[..., 0], px[..., 1] - 0.5, px[..., 2] - 0.5
    r = y + 1.402 * cr
    g = y - 0.344136 * cb - 0.714136 * cr
    b = y + 1.772 * cb
    return np.stack([r, g, b], axis=-1)


def _quantize_channel(chan: np.ndarray, qtable: np.ndarray) -> np.ndarray:
    h, w = chan.shape
    blocks = chan.reshape(h // 8, 8, w // 8, 8).transpose(0, 2, 1, 3)
    coefs = np.einsum("ij,bcjk,lk->bcil", _DCT, blocks - 128.0, _DCT)
    coefs = np.round(coefs / qtable) * qtable
    blocks = np.einsum("ji,bcjk,kl->bcil", _DCT, coefs, _DCT) + 128.0
    return blocks.transpose(0, 2, 1, 3).reshape(h, w)


def jpeg_roundtrip(img: Image, quality: int) -> Image:
    """Compression round-trip distortion at the given quality factor.

    Requires dimensions that are multiples of 8; `jpeg_distortion` wraps
    this with edge-replication padding for arbitrary sizes.
    """
    if img.height % 8 or img.width % 8:
        raise ValueError(
            f"dimensions must be multiples of 8, got {img.height}x{img.width}"
        )
    q_luma = scaled_quant_table(QUANT_LUMA, quality)
    q_chroma = scaled_quant_table(QUANT_CHROMA, quality)
    ycc = _rgb_to_ycbcr(img.pixels) * 255.0
    out = np.empty_like(ycc)
    for c, table in ((0, q_luma), (1, q_chroma), (2, q_chroma)):
        out[..., c] = _quantize_channel(ycc[..., c], table)
    rgb = _ycbcr_to_rgb(out / 255.0)
    return Image(np.clip(rgb, 0.0, 1.0))


def jpeg_distortion(img: Image, quality: int) -> Image:
    """JPEG round-trip for any size: pad by edge replication, crop back."""
    pad_h = (-img.height) % 8
    pad_w = (-img.width) % 8
    if pad_h == 0 and pad_w == 0:
        return jpeg_roundtrip(img, quality)
    px = np.pad(img.pixels, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    out = jpeg_roundtrip(Image(px), quality)
    return Image(out.pixels[: img.height, : img.width])


def brightness_haze_baseline(img: Image, strength: float) -> Image:
    """Blend toward white: out = (1-strength)*img + strength."""
    if not 0.0 <= strength <= 1.0:
        raise ValueError(f"strength must be in [0, 1], got {strength}")
    return Image(np.clip((1.0 - strength) * img.pixels + strength, 0.0, 1.0))


def luminance(px: np.ndarray) -> np.ndarray:
    """Per-pixel luminance as the plain channel mean (matches the toy encoder)."""
    return px.mean(axis=-1)


def psnr(a: Image, b: Image) -> float:
    """Peak signal-to-noise ratio in dB between two same-size images."""
    mse = float(np.mean((a.pixels - b.pixels) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / mse))
