import numpy as np
import pytest

from atmos_hijack import lexicon
from atmos_hijack.atmosphere import fixed_cloud_baseline
from atmos_hijack.benchmark import texture_query
from atmos_hijack.defense import (
    DefenseConfig,
    atmospheric_risk_score,
    instability_score,
    jaccard_instability,
    rerank_result,
    rerank_score,
)
from atmos_hijack.encoders import normalize
from atmos_hijack.imaging import Image, gaussian_blur, luminance
from atmos_hijack.retrieval import EvidenceCorpus, EvidenceEntry, RetrievalResult, topk


def entry(eid, vec, category):
    return EvidenceEntry(
        id=eid, text=f"text {eid}", category=category, embedding=normalize(vec)
    )


# --- risk score -----------------------------------------------------------------


def test_risk_all_white_is_one():
    img = Image(np.ones((16, 16, 3)))
    assert atmospheric_risk_score(img) == pytest.approx(1.0)


def test_risk_checkerboard_contrast_component_zero():
    from atmos_hijack.imaging import resize_bilinear

    board = np.indices((32, 32)).sum(axis=0) % 2
    img = Image(np.stack([board] * 3, axis=-1).astype(float))
    lum = luminance(img.pixels)
    assert lum.std() == pytest.approx(0.5)  # clamped by the 0.25 scale -> 0
    cfg = DefenseConfig()
    veil = float((lum > cfg.veil_threshold).mean())
    low = resize_bilinear(resize_bilinear(img, 8, 8), 32, 32)
    frac = float((low.pixels**2).sum() / (img.pixels**2).sum())
    lowfreq = min(max((frac - 0.5) / 0.5, 0.0), 1.0)
    # risk decomposes with a zero contrast-attenuation component
    assert atmospheric_risk_score(img, cfg) == pytest.approx(
        (veil + 0.0 + lowfreq) / 3.0, abs=1e-12
    )


def test_risk_in_unit_interval():
    for seed in range(5):
        img = texture_query(seed)
        assert 0.0 <= atmospheric_risk_score(img) <= 1.0


def test_risk_flags_rendered_images():
    wins = 0
    for seed in range(20):
        clean = texture_query(seed)
        adv = fixed_cloud_baseline(clean, 3000 + seed).quantize8()
        wins += atmospheric_risk_score(adv) > atmospheric_risk_score(clean)
    assert wins >= 18


# --- instability ------------------------------------------------------------------


def test_jaccard_cases():
    a = frozenset("abcde")
    assert jaccard_instability(a, a) == 0.0
    assert jaccard_instability(a, frozenset("fghij")) == 1.0
    b = frozenset("abcfg")  # overlap 3, union 7
    assert jaccard_instability(a, b) == pytest.approx(1.0 - 3.0 / 7.0)
    assert jaccard_instability(a, b) == jaccard_instability(b, a)
    assert jaccard_instability(frozenset(), frozenset()) == 0.0


def test_instability_identity_transform_zero(toy_encoder, bench_corpus):
    img = texture_query(1)
    score = instability_score(
        img, [lambda im: im], bench_corpus, 5, toy_encoder
    )
    assert score == 0.0


def test_instability_bounded_and_max_aggregated(toy_encoder, bench_corpus):
    img = texture_query(2)
    t_blur = lambda im: gaussian_blur(im, 1.0).quantize8()
    only_blur = instability_score(img, [t_blur], bench_corpus, 5, toy_encoder)
    both = instability_score(
        img, [lambda im: im, t_blur], bench_corpus, 5, toy_encoder
    )
    assert 0.0 <= only_blur <= 1.0
    assert both == only_blur  # max(0, blur score)


def test_instability_disjoint_sets_is_one(bench_corpus):
    class SwapEncoder:
        """Returns one fixed embedding for originals, another for transforms."""

        def __init__(self, corpus):
            self.a = corpus.entries[0].embedding
            self.b = corpus.entries[-1].embedding
            self.flip = False

        @property
        def descriptor(self):
            from atmos_hijack.encoders import EncoderDescriptor

            return EncoderDescriptor("toy", len(self.a), "swap", True)

        def encode_image(self, img):
            self.flip = not self.flip
            return self.a if self.flip else self.b

    enc = SwapEncoder(bench_corpus)
    score = instability_score(
        texture_query(3), [lambda im: im], bench_corpus, 1, enc
    )
    assert score == 1.0


def test_instability_k_validation(toy_encoder, bench_corpus):
    with pytest.raises(ValueError):
        instability_score(texture_query(0), [], bench_corpus, 0, toy_encoder)


# --- rerank -----------------------------------------------------------------------


def micro_result_and_corpus():
    cats = [
        lexicon.SOURCE_SCENE,
        lexicon.SOURCE_SCENE,
        lexicon.SOURCE_SCENE,
        lexicon.SOURCE_SCENE,
        lexicon.WEATHER_CLOUD,
    ]
    dim = 8
    entries = []
    for i, cat in enumerate(cats):
        vec = np.zeros(dim)
        vec[0] = 0.9 - 0.1 * i
        vec[1 + i] = np.sqrt(1 - vec[0] ** 2)
        entries.append(entry(f"e{i}", vec, cat))
    corpus = EvidenceCorpus(entries)
    axis = np.zeros(dim)
    axis[0] = 1.0
    return topk(axis, corpus, 5), corpus


def test_rerank_zero_weights_noop_score():
    result, corpus = micro_result_and_corpus()
    for eid, sim in result.ranked:
        assert rerank_score(sim, eid, result, corpus, 0.0, 0.0) == sim


def test_rerank_lone_weather_penalized():
    result, corpus = micro_result_and_corpus()
    # e4 is the only weather entry among 4 source-scene neighbors
    base = dict(result.ranked)["e4"]
    got = rerank_score(base, "e4", result, corpus, 0.0, 0.5)
    assert got == pytest.approx(base - 0.5)


def test_rerank_scene_consistency_bonus():
    cats = [lexicon.SOURCE_SCENE] * 5
    dim = 8
    entries = []
    for i, cat in enumerate(cats):
        vec = np.zeros(dim)
        vec[0] = 0.9 - 0.1 * i
        vec[1 + i] = np.sqrt(1 - vec[0] ** 2)
        entries.append(entry(f"e{i}", vec, cat))
    corpus = EvidenceCorpus(entries)
    axis = np.zeros(dim)
    axis[0] = 1.0
    result = topk(axis, corpus, 5)
    base = dict(result.ranked)["e0"]
    # all other neighbors share the category -> bonus is exactly lambda_s
    assert rerank_score(base, "e0", result, corpus, 0.2, 0.0) == pytest.approx(
        base + 0.2
    )


def test_rerank_supported_weather_not_penalized():
    cats = [lexicon.WEATHER_CLOUD, lexicon.WEATHER_FOG_HAZE] + [lexicon.SOURCE_SCENE] * 3
    dim = 8
    entries = []
    for i, cat in enumerate(cats):
        vec = np.zeros(dim)
        vec[0] = 0.9 - 0.1 * i
        vec[1 + i] = np.sqrt(1 - vec[0] ** 2)
        entries.append(entry(f"e{i}", vec, cat))
    corpus = EvidenceCorpus(entries)
    axis = np.zeros(dim)
    axis[0] = 1.0
    result = topk(axis, corpus, 5)
    base = dict(result.ranked)["e0"]
    # another weather neighbor exists -> no unsupported-weather penalty
    assert rerank_score(base, "e0", result, corpus, 0.0, 0.5) == pytest.approx(base)


def test_rerank_result_zero_weights_preserves_order():
    result, corpus = micro_result_and_corpus()
    reranked = rerank_result(result, corpus, 0.0, 0.0)
    assert reranked.ids() == result.ids()
    assert [s for _, s in reranked.ranked] == [s for _, s in result.ranked]


def test_rerank_preserves_relative_order_same_context():
    # entries of identical category and identical neighbor context keep order
    result, corpus = micro_result_and_corpus()
    reranked = rerank_result(result, corpus, 0.3, 0.7)
    scene_before = [i for i in result.ids() if corpus.category_of(i) == lexicon.SOURCE_SCENE]
    scene_after = [i for i in reranked.ids() if corpus.category_of(i) == lexicon.SOURCE_SCENE]
    assert scene_before == scene_after


def test_rerank_demotes_lone_weather():
    result, corpus = micro_result_and_corpus()
    assert result.ids()[-1] == "e4"
    reranked = rerank_result(result, corpus, 0.0, 10.0)
    assert reranked.ids()[-1] == "e4"
    assert dict(reranked.ranked)["e4"] < dict(result.ranked)["e4"]


def test_rerank_needs_neighbors():
    result, corpus = micro_result_and_corpus()
    with pytest.raises(ValueError):
        rerank_score(0.5, "e0", RetrievalResult(ranked=()), corpus, 0.1, 0.1)


def test_defense_config_validation():
    with pytest.raises(ValueError):
        DefenseConfig(instability_k=0)
    with pytest.raises(ValueError):
        DefenseConfig(rerank_scene_weight=-1.0)
