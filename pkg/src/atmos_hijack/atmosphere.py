"""Parameterized atmospheric perturbation rendering.

A perturbation is a 5-vector: severity (coverage), cloud opacity, global
haze strength, edge softness, and an integer texture seed. From it we
build a smooth low-frequency cloud mask M and a near-white color field C,
apply global haze H(x) = (1-haze)*x + haze*C, then alpha-blend with the
opacity map A = opacity*M:

    out = clip((1-A) * H(x) + A * C)

All fields are deterministic functions of the parameters, so identical
parameter vectors render identical images on any platform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .imaging import Image, gaussian_blur
from .prng import SplitMix64

# Edge softness is specified at a 512px reference resolution; masks on
# smaller canvases get proportionally smaller blur kernels.
SOFTNESS_REFERENCE = 512.0

# Half-width of the smoothstep ramp used to threshold noise into a mask.
# Wide on purpose: masks grade smoothly from clear to dense, so opaque
# cores appear only where the noise peaks and coverage responds strongly
# to the severity threshold.
_RAMP_BELOW = 0.30
_RAMP_ABOVE = 0.30

_NOISE_OCTAVES = 4
_NOISE_BASE_CELLS = 4
_NOISE_PERSISTENCE = 0.5


@dataclass(frozen=True)
class ParamBounds:
    """Feasible box for the 5 perturbation parameters (inclusive intervals)."""

    severity: tuple[float, float] = (0.35, 0.85)
    opacity: tuple[float, float] = (0.45, 0.95)
    haze: tuple[float, float] = (0.00, 0.15)
    edge_softness: tuple[float, float] = (0.0, 10.0)
    texture_seed: tuple[float, float] = (0.0, 9999.0)

    def __post_init__(self):
        for lo, hi in self.as_pairs():
            if lo > hi:
                raise ValueError(f"empty bound interval [{lo}, {hi}]")

    def as_pairs(self) -> list[tuple[float, float]]:
        return [
            self.severity,
            self.opacity,
            self.haze,
            self.edge_softness,
            self.texture_seed,
        ]

    def clip_vector(self, vec: list[float]) -> list[float]:
        return [min(max(v, lo), hi) for v, (lo, hi) in zip(vec, self.as_pairs())]

    def uniform_vector(self, rng: SplitMix64) -> list[float]:
        return [rng.uniform(lo, hi) for lo, hi in self.as_pairs()]

    def contains(self, params: "AtmosParams") -> bool:
        vec = params.to_vector()
        return all(lo <= v <= hi for v, (lo, hi) in zip(vec, self.as_pairs()))


@dataclass(frozen=True)
class AtmosParams:
    """One point of the perturbation family."""

    severity: float
    opacity: float
    haze: float
    edge_softness: float
    texture_seed: int

    def to_vector(self) -> list[float]:
        return [
            self.severity,
            self.opacity,
            self.haze,
            self.edge_softness,
            float(self.texture_seed),
        ]

    @staticmethod
    def from_vector(vec) -> "AtmosParams":
        # the seed dimension is a continuous relaxation during search;
        # materialize it as the nearest integer (half rounds up)
        return AtmosParams(
            severity=float(vec[0]),
            opacity=float(vec[1]),
            haze=float(vec[2]),
            edge_softness=float(vec[3]),
            texture_seed=int(math.floor(float(vec[4]) + 0.5)),
        )

    def to_dict(self) -> dict:
        return {
            "severity": self.severity,
            "opacity": self.opacity,
            "haze": self.haze,
            "edge_softness": self.edge_softness,
            "texture_seed": self.texture_seed,
        }

    @staticmethod
    def from_dict(d: dict) -> "AtmosParams":
        return AtmosParams(
            severity=float(d["severity"]),
            opacity=float(d["opacity"]),
            haze=float(d["haze"]),
            edge_softness=float(d["edge_softness"]),
            texture_seed=int(d["texture_seed"]),
        )


@dataclass(frozen=True)
class CloudField:
    """Mask, color field, and opacity map for one rendered perturbation."""

    mask: np.ndarray  # (h, w) in [0, 1]
    color: np.ndarray  # (h, w, 3) in [0, 1]
    opacity_map: np.ndarray  # opacity * mask, exactly

    def __post_init__(self):
        for arr in (self.mask, self.color, self.opacity_map):
            arr.setflags(write=False)


def value_noise(h: int, w: int, cells: int, rng: SplitMix64) -> np.ndarray:
    """One octave of lattice value noise, bilinear between lattice points."""
    lattice = rng.floats((cells + 1) * (cells + 1)).reshape(cells + 1, cells + 1)
    gy = np.arange(h, dtype=np.float64) * cells / h
    gx = np.arange(w, dtype=np.float64) * cells / w
    iy = np.minimum(gy.astype(np.int64), cells - 1)
    ix = np.minimum(gx.astype(np.int64), cells - 1)
    fy = (gy - iy)[:, None]
    fx = (gx - ix)[None, :]
    v00 = lattice[np.ix_(iy, ix)]
    v01 = lattice[np.ix_(iy, ix + 1)]
    v10 = lattice[np.ix_(iy + 1, ix)]
    v11 = lattice[np.ix_(iy + 1, ix + 1)]
    top = v00 + fx * (v01 - v00)
    bot = v10 + fx * (v11 - v10)
    return top + fy * (bot - top)


def fbm_noise(h: int, w: int, seed: int, octaves: int = _NOISE_OCTAVES) -> np.ndarray:
    """Multi-octave value noise, amplitude-normalized then stretched to [0, 1].

    The base octave places a 4x4 cell grid over the canvas regardless of
    resolution, so the same seed produces the same large-scale structure
    at any size.
    """
    rng = SplitMix64(seed)
    total = np.zeros((h, w), dtype=np.float64)
    amplitude = 1.0
    weight_sum = 0.0
    for o in range(octaves):
        cells = _NOISE_BASE_CELLS * (2**o)
        total += amplitude * value_noise(h, w, cells, rng)
        weight_sum += amplitude
        amplitude *= _NOISE_PERSISTENCE
    total /= weight_sum
    return _stretch_unit(total)


def _stretch_unit(field: np.ndarray) -> np.ndarray:
    lo = float(field.min())
    hi = float(field.max())
    if hi - lo < 1e-12:
        return np.zeros_like(field)
    return (field - lo) / (hi - lo)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * (3.0 - 2.0 * t)


def coverage_threshold(severity: float) -> float:
    """Noise threshold as a function of severity; higher severity, more cover."""
    return 0.75 - 0.5 * severity


def softness_sigma(edge_softness: float, h: int, w: int) -> float:
    return edge_softness * min(h, w) / SOFTNESS_REFERENCE


def gen_cloud_mask(params: AtmosParams, h: int, w: int) -> np.ndarray:
    """Smooth low-frequency cloud mask in [0, 1], deterministic in the params.

    Normalized multi-octave noise is squared to skew its mass toward low
    values (untouched, the symmetric noise distribution puts the severity
    thresholds near 50-80% coverage, which defeats the coverage prior),
    thresholded through a smoothstep ramp around coverage_threshold(severity),
    blurred by the edge-softness sigma, and restretched into [0, 1].
    """
    noise = fbm_noise(h, w, params.texture_seed)
    noise = noise * noise
    t = coverage_threshold(params.severity)
    mask = _smoothstep((noise - (t - _RAMP_BELOW)) / (_RAMP_BELOW + _RAMP_ABOVE))
    sigma = softness_sigma(params.edge_softness, h, w)
    if sigma > 0:
        mask = gaussian_blur(mask, sigma)
    return _stretch_unit(mask)


def gen_cloud_color(params: AtmosParams, h: int, w: int) -> np.ndarray:
    """Near-white haze color field: base 0.92 + 0.06*severity, textured +-0.05.

    The texture channel runs on seed+1 so mask and color are decorrelated;
    blue gets a +0.01 bias. All values stay >= 0.8 anywhere in the default
    bounds.
    """
    texture = fbm_noise(h, w, params.texture_seed + 1)
    texture = gaussian_blur(texture, 2.0 * min(h, w) / SOFTNESS_REFERENCE)
    texture = _stretch_unit(texture)
    lum = 0.92 + 0.06 * params.severity + (texture - 0.5) * 0.1
    color = np.stack([lum, lum, lum + 0.01], axis=-1)
    return np.clip(color, 0.0, 1.0)


def make_cloud_field(params: AtmosParams, h: int, w: int) -> CloudField:
    mask = gen_cloud_mask(params, h, w)
    color = gen_cloud_color(params, h, w)
    return CloudField(mask=mask, color=color, opacity_map=params.opacity * mask)


def compose(img: Image, params: AtmosParams, field: CloudField) -> Image:
    """Haze then alpha-blend (the render equation); exposed for test hooks."""
    a = field.opacity_map[..., None]
    hazed = (1.0 - params.haze) * img.pixels + params.haze * field.color
    out = (1.0 - a) * hazed + a * field.color
    return Image(np.clip(out, 0.0, 1.0))


def render(img: Image, params: AtmosParams) -> tuple[Image, CloudField]:
    """Render the perturbed image; the field is returned for the mask losses."""
    field = make_cloud_field(params, img.height, img.width)
    return compose(img, params, field), field


# Midpoints of the default bounds; the unoptimized same-family baseline.
FIXED_BASELINE = dict(severity=0.60, opacity=0.70, haze=0.075, edge_softness=5.0)


def fixed_cloud_baseline(img: Image, seed: int) -> Image:
    """Render with fixed mid-range parameters (only the texture seed varies)."""
    params = AtmosParams(texture_seed=seed, **FIXED_BASELINE)
    out, _ = render(img, params)
    return out


def draw_uniform_params(bounds: ParamBounds, rng: SplitMix64) -> AtmosParams:
    return AtmosParams.from_vector(bounds.uniform_vector(rng))


def random_cloud_baseline(
    img: Image, seed: int, bounds: ParamBounds | None = None
) -> Image:
    """Render with parameters drawn uniformly from the feasible box."""
    params = draw_uniform_params(bounds or ParamBounds(), SplitMix64(seed))
    out, _ = render(img, params)
    return out
