"""Retrieval-oriented attack objective.

Five terms over a candidate image embedding z and the per-query evidence
split: temperature-scaled log-sum-exp attraction to target evidence,
log-sum-exp suppression of source-scene evidence, a pairwise hinge that
separates target similarities above source similarities by a margin, a
mask naturalness regularizer (total variation plus deviation from its own
Gaussian smoothing), and a quadratic coverage prior on the mask mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .atmosphere import softness_sigma
from .imaging import Image, gaussian_blur


@dataclass(frozen=True)
class ObjectiveConfig:
    weight_target: float = 1.0
    weight_source: float = 0.3
    weight_rank: float = 1.0
    weight_naturalness: float = 0.05
    weight_area: float = 0.1
    temperature: float = 0.07
    margin: float = 0.02
    target_coverage: float = 0.18

    def __post_init__(self):
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        for name in (
            "weight_target",
            "weight_source",
            "weight_rank",
            "weight_naturalness",
            "weight_area",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.margin < 0:
            raise ValueError("margin must be non-negative")
        if not 0.0 < self.target_coverage < 1.0:
            raise ValueError("target_coverage must be in (0, 1)")

    def to_dict(self) -> dict:
        return {
            "weight_target": self.weight_target,
            "weight_source": self.weight_source,
            "weight_rank": self.weight_rank,
            "weight_naturalness": self.weight_naturalness,
            "weight_area": self.weight_area,
            "temperature": self.temperature,
            "margin": self.margin,
            "target_coverage": self.target_coverage,
        }


@dataclass(frozen=True)
class EvidenceSplit:
    """Unit-norm target and source text embeddings for one query."""

    targets: np.ndarray  # (n_targets, dim)
    sources: np.ndarray  # (n_sources, dim)
    target_ids: tuple[str, ...] = field(default=())
    source_ids: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for name, mat in (("targets", self.targets), ("sources", self.sources)):
            if mat.ndim != 2 or mat.shape[0] == 0:
                raise ValueError(f"{name} must be a non-empty (n, dim) matrix")
            norms = np.linalg.norm(mat, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-4):
                raise ValueError(f"{name} contain non-unit vectors")


def _logsumexp_scaled(sims: np.ndarray, temperature: float) -> float:
    """temperature * log(sum(exp(s / temperature))), guarded by max-subtraction."""
    m = float(np.max(sims))
    return m + temperature * math.log(
        float(np.sum(np.exp((sims - m) / temperature)))
    )


def loss_target(v: np.ndarray, targets: np.ndarray, temperature: float) -> float:
    """Pull toward target evidence (soft-max over target similarities, negated)."""
    if targets.shape[0] == 0:
        raise ValueError("empty target set")
    return -_logsumexp_scaled(targets @ v, temperature)


def loss_source(v: np.ndarray, sources: np.ndarray, temperature: float) -> float:
    """Push away from source-scene evidence; sign-flipped analog of loss_target."""
    if sources.shape[0] == 0:
        raise ValueError("empty source set")
    return _logsumexp_scaled(sources @ v, temperature)


def loss_rank(
    v: np.ndarray, targets: np.ndarray, sources: np.ndarray, margin: float
) -> float:
    """Mean hinge over all (target, source) pairs: [margin - s_t + s_u]+."""
    if targets.shape[0] == 0 or sources.shape[0] == 0:
        raise ValueError("empty evidence set")
    st = targets @ v
    su = sources @ v
    hinge = np.maximum(0.0, margin - st[:, None] + su[None, :])
    return float(hinge.mean())


def total_variation(mask: np.ndarray) -> float:
    """Anisotropic TV, forward differences, normalized per pixel."""
    dx = np.abs(np.diff(mask, axis=1)).sum()
    dy = np.abs(np.diff(mask, axis=0)).sum()
    return float((dx + dy) / mask.size)


def loss_naturalness(mask: np.ndarray, edge_softness: float) -> float:
    """TV plus mean deviation from the softness-matched Gaussian smoothing.

    Both terms are per-pixel means so the weight has the same meaning at
    any resolution. The smoothing sigma uses the renderer's mapping, so a
    constant mask (or softness 0) zeroes the second term.
    """
    h, w = mask.shape
    sigma = softness_sigma(edge_softness, h, w)
    smoothed = gaussian_blur(mask, sigma) if sigma > 0 else mask
    return total_variation(mask) + float(np.abs(mask - smoothed).mean())


def loss_area(mask: np.ndarray, target_coverage: float) -> float:
    """Squared deviation of mean coverage from the target ratio."""
    return float((mask.mean() - target_coverage) ** 2)


def total_objective(
    candidate: Image,
    mask: np.ndarray,
    edge_softness: float,
    split: EvidenceSplit,
    cfg: ObjectiveConfig,
    encoder,
) -> tuple[float, dict[str, float]]:
    """Encode the candidate and combine the five weighted terms.

    Returns the scalar objective and the unweighted term breakdown.
    Encoder failures propagate; the optimizer maps them to an infeasible
    sentinel.
    """
    z = encoder.encode_image(candidate)
    terms = {
        "target": loss_target(z, split.targets, cfg.temperature),
        "source": loss_source(z, split.sources, cfg.temperature),
        "rank": loss_rank(z, split.targets, split.sources, cfg.margin),
        "naturalness": loss_naturalness(mask, edge_softness),
        "area": loss_area(mask, cfg.target_coverage),
    }
    total = (
        cfg.weight_target * terms["target"]
        + cfg.weight_source * terms["source"]
        + cfg.weight_rank * terms["rank"]
        + cfg.weight_naturalness * terms["naturalness"]
        + cfg.weight_area * terms["area"]
    )
    return total, terms
