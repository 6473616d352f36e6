"""Retrieval-side defenses against atmospheric query manipulation.

Three independent signals: an image-statistics risk score for atmospheric
appearance, a retrieval instability score comparing top-k sets under
benign transforms, and a reranking rule that rewards scene-consistent
evidence and penalizes weather evidence unsupported by its neighbors.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import lexicon
from .imaging import Image, luminance, resize_bilinear
from .retrieval import EvidenceCorpus, RetrievalResult, topk


@dataclass(frozen=True)
class DefenseConfig:
    veil_threshold: float = 0.8
    contrast_scale: float = 0.25
    lowfreq_pivot: float = 0.5
    instability_k: int = 5
    rerank_scene_weight: float = 0.2
    rerank_weather_weight: float = 0.5

    def __post_init__(self):
        if self.instability_k < 1:
            raise ValueError("instability_k must be >= 1")
        if self.rerank_scene_weight < 0 or self.rerank_weather_weight < 0:
            raise ValueError("rerank weights must be non-negative")


def atmospheric_risk_score(img: Image, cfg: DefenseConfig | None = None) -> float:
    """Mean of three normalized atmospheric statistics, in [0, 1].

    Bright-veil coverage (fraction of pixels above the veil threshold),
    contrast attenuation (how far luminance std falls below the scale),
    and the fraction of signal energy surviving a 4x down/up resample,
    mapped through (f - pivot) / (1 - pivot).
    """
    cfg = cfg or DefenseConfig()
    lum = luminance(img.pixels)
    veil = float((lum > cfg.veil_threshold).mean())
    contrast_att = 1.0 - min(float(lum.std()) / cfg.contrast_scale, 1.0)
    low = resize_bilinear(
        resize_bilinear(img, max(8, img.height // 4), max(8, img.width // 4)),
        img.height,
        img.width,
    )
    total_energy = float((img.pixels**2).sum())
    if total_energy == 0.0:
        frac = 1.0
    else:
        frac = float((low.pixels**2).sum()) / total_energy
    lowfreq = min(max((frac - cfg.lowfreq_pivot) / (1.0 - cfg.lowfreq_pivot), 0.0), 1.0)
    return (veil + contrast_att + lowfreq) / 3.0


def jaccard_instability(set_a: frozenset, set_b: frozenset) -> float:
    """1 - |A n B| / |A u B|; 0 for identical sets, 1 for disjoint."""
    union = set_a | set_b
    if not union:
        return 0.0
    return 1.0 - len(set_a & set_b) / len(union)


def instability_score(
    query: Image,
    transforms,
    corpus: EvidenceCorpus,
    k: int,
    encoder,
) -> float:
    """Max over benign transforms of the top-k Jaccard instability.

    `transforms` is an iterable of callables Image -> Image. A stable
    query retrieves the same evidence under mild transforms; a hijacked
    one usually does not.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(corpus))
    base = topk(encoder.encode_image(query), corpus, k).id_set(k)
    worst = 0.0
    for transform in transforms:
        shifted = topk(encoder.encode_image(transform(query)), corpus, k).id_set(k)
        worst = max(worst, jaccard_instability(base, shifted))
    return worst


def _neighbor_categories(
    entry_id: str, neighbors: RetrievalResult, corpus: EvidenceCorpus
) -> list[str]:
    return [
        corpus.category_of(other_id)
        for other_id in neighbors.ids()
        if other_id != entry_id
    ]


def rerank_score(
    base_sim: float,
    entry_id: str,
    neighbors: RetrievalResult,
    corpus: EvidenceCorpus,
    scene_weight: float,
    weather_weight: float,
) -> float:
    """base similarity + scene-consistency bonus - unsupported-weather penalty.

    Scene consistency is the fraction of the *other* top-k neighbors
    sharing this entry's category; the weather penalty fires only when the
    entry is weather-tagged and no other neighbor is.
    """
    if len(neighbors) == 0:
        raise ValueError("neighbors must be non-empty")
    category = corpus.category_of(entry_id)
    others = _neighbor_categories(entry_id, neighbors, corpus)
    scene_consistency = (
        sum(c == category for c in others) / len(others) if others else 0.0
    )
    unsupported_weather = float(
        category in lexicon.WEATHER_GROUPS
        and not any(c in lexicon.WEATHER_GROUPS for c in others)
    )
    return (
        base_sim
        + scene_weight * scene_consistency
        - weather_weight * unsupported_weather
    )


def rerank_result(
    result: RetrievalResult,
    corpus: EvidenceCorpus,
    scene_weight: float,
    weather_weight: float,
) -> RetrievalResult:
    """Re-sort a retrieval result by the reranked scores.

    With both weights zero this is an exact no-op: scores are unchanged
    and the original rank is the tie-break.
    """
    rescored = [
        (
            entry_id,
            rerank_score(sim, entry_id, result, corpus, scene_weight, weather_weight),
        )
        for entry_id, sim in result.ranked
    ]
    order = sorted(range(len(rescored)), key=lambda i: (-rescored[i][1], i))
    return RetrievalResult(ranked=tuple(rescored[i] for i in order))
