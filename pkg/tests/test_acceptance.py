"""Acceptance suite: one test per release criterion, each printing a
PASS/FAIL line. Run with `pytest tests/test_acceptance.py -v -s`.

The end-to-end criteria share three full benchmark runs (50 queries each,
master seeds 20260421..23) through session fixtures, so the whole module
stays well inside the ten-minute budget.
"""

import json
import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from atmos_hijack import lexicon
from atmos_hijack.atmosphere import (
    AtmosParams,
    CloudField,
    ParamBounds,
    compose,
    draw_uniform_params,
    gen_cloud_color,
    render,
)
from atmos_hijack.benchmark import build_benchmark_corpus
from atmos_hijack.defense import jaccard_instability, rerank_result, rerank_score
from atmos_hijack.defense import atmospheric_risk_score
from atmos_hijack.atmosphere import fixed_cloud_baseline
from atmos_hijack.benchmark import texture_query
from atmos_hijack.encoders import ToyEncoder, normalize
from atmos_hijack.imaging import Image, gaussian_blur
from atmos_hijack.objective import (
    EvidenceSplit,
    ObjectiveConfig,
    loss_area,
    loss_naturalness,
    loss_rank,
    loss_source,
    loss_target,
    total_objective,
    total_variation,
)
from atmos_hijack.optimizer import (
    Candidate,
    DEConfig,
    de_round,
    init_population,
    local_refine,
    optimize_query,
)
from atmos_hijack.prng import SplitMix64
from atmos_hijack.retrieval import (
    EvidenceCorpus,
    EvidenceEntry,
    mechanism_stats,
    metric_top_changed,
    metric_weather_at_k,
    topk,
)
from atmos_hijack.runner import (
    RunConfig,
    apply_ablation,
    cmd_attack,
    cmd_robustness,
    read_csv_rows,
)

from conftest import seeded_image

SEEDS = (20260421, 20260422, 20260423)
TAU = 0.07


def quiet(*args, **kwargs):
    pass


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"\nACCEPTANCE {name}: FAIL")
        raise
    print(f"\nACCEPTANCE {name}: PASS")


@pytest.fixture(scope="module")
def bench_runs(tmp_path_factory):
    runs = {}
    started = time.time()
    for seed in SEEDS:
        cfg = RunConfig(de=DEConfig(master_seed=seed), benchmark_queries=50)
        out = str(tmp_path_factory.mktemp(f"bench_{seed}"))
        report = cmd_attack(cfg, out, log=quiet)
        runs[seed] = (out, report)
    return runs, time.time() - started


@pytest.fixture(scope="module")
def ablation_runs(tmp_path_factory):
    runs = {}
    for seed in SEEDS:
        cfg = apply_ablation(
            RunConfig(de=DEConfig(master_seed=seed), benchmark_queries=50), "no-ltar"
        )
        out = str(tmp_path_factory.mktemp(f"noltar_{seed}"))
        runs[seed] = (out, cmd_attack(cfg, out, log=quiet))
    return runs


def unit_rows(rng, n, dim):
    mat = rng.floats(n * dim).reshape(n, dim) - 0.5
    return np.stack([normalize(r) for r in mat])


# === 1. loss oracle equivalence ==============================================


def test_loss_oracle_equivalence(toy_encoder):
    with criterion("loss-oracle-equivalence"):
        started = time.time()
        rng = SplitMix64(424242)
        for case in range(200):
            dim = 8 + int(rng.next_float() * 56)
            targets = unit_rows(rng, 1 + int(rng.next_float() * 7), dim)
            sources = unit_rows(rng, 1 + int(rng.next_float() * 7), dim)
            v = unit_rows(rng, 1, dim)[0]
            t_sims = (targets @ v).astype(np.longdouble)
            s_sims = (sources @ v).astype(np.longdouble)
            naive_target = float(-TAU * np.log(np.sum(np.exp(t_sims / TAU))))
            naive_source = float(TAU * np.log(np.sum(np.exp(s_sims / TAU))))
            naive_rank = float(
                np.mean(np.maximum(0.0, 0.02 - t_sims[:, None] + s_sims[None, :]))
            )
            assert loss_target(v, targets, TAU) == pytest.approx(
                naive_target, rel=1e-9, abs=1e-12
            )
            assert loss_source(v, sources, TAU) == pytest.approx(
                naive_source, rel=1e-9, abs=1e-12
            )
            assert loss_rank(v, targets, sources, 0.02) == pytest.approx(
                naive_rank, rel=1e-9, abs=1e-12
            )
        for case in range(200):
            mask = rng.floats(12 * 12).reshape(12, 12)
            softness = rng.next_float() * 10
            h, w = mask.shape
            tv = sum(
                abs(mask[i, j + 1] - mask[i, j])
                for i in range(h)
                for j in range(w - 1)
            ) + sum(
                abs(mask[i + 1, j] - mask[i, j])
                for i in range(h - 1)
                for j in range(w)
            )
            sigma = softness * min(h, w) / 512.0
            smoothed = gaussian_blur(mask, sigma) if sigma > 0 else mask
            naive_nat = tv / mask.size + float(np.abs(mask - smoothed).mean())
            naive_area = float((np.mean(mask.astype(np.longdouble)) - 0.18) ** 2)
            assert loss_naturalness(mask, softness) == pytest.approx(
                naive_nat, rel=1e-9, abs=1e-12
            )
            assert loss_area(mask, 0.18) == pytest.approx(
                naive_area, rel=1e-9, abs=1e-15
            )

        # monolithic objective oracle
        img = seeded_image(99, 64, 64)
        params = AtmosParams(0.7, 0.8, 0.05, 3.0, 55)
        rendered, field = render(img, params)
        targets = np.stack(
            [toy_encoder.encode_text(t) for t in (
                "thick white cloud cover",
                "dense fog and haze over the basin",
                "white mist rises from the valley",
            )]
        )
        sources = np.stack(
            [toy_encoder.encode_text(t) for t in (
                "aerial view of a residential area with houses",
                "satellite image of an airport with runways",
            )]
        )
        split = EvidenceSplit(targets=targets, sources=sources)
        cfg = ObjectiveConfig()
        got, _ = total_objective(
            rendered, field.mask, params.edge_softness, split, cfg, toy_encoder
        )
        z = toy_encoder.encode_image(rendered)
        ts, ss = targets @ z, sources @ z
        mono = (
            1.0 * (-TAU * math.log(sum(math.exp(s / TAU) for s in ts)))
            + 0.3 * (TAU * math.log(sum(math.exp(s / TAU) for s in ss)))
            + 1.0 * (sum(max(0.0, 0.02 - a + b) for a in ts for b in ss) / (len(ts) * len(ss)))
            + 0.05 * (
                total_variation(field.mask)
                + float(np.abs(field.mask - gaussian_blur(field.mask, params.edge_softness * 64 / 512.0)).mean())
            )
            + 0.1 * float((field.mask.mean() - 0.18) ** 2)
        )
        assert got == pytest.approx(mono, abs=1e-6)
        assert time.time() - started < 5.0


# === 2. closed-form spot checks ==============================================


def test_closed_form_spot_checks():
    with criterion("closed-form-spot-checks"):
        # single target: loss is the negated similarity
        dim = 8
        v = np.zeros(dim); v[0] = 1.0
        t = np.zeros((1, dim)); t[0, 0] = 0.73; t[0, 1] = math.sqrt(1 - 0.73**2)
        assert loss_target(v, t, TAU) == pytest.approx(-0.73, abs=1e-12)
        # all-ones mask area loss at coverage target 0.18
        assert loss_area(np.ones((10, 10)), 0.18) == pytest.approx(0.6724, abs=1e-12)
        # constant mask naturalness is zero (to kernel-normalization rounding)
        assert loss_naturalness(np.full((16, 16), 0.4), 7.0) == pytest.approx(
            0.0, abs=1e-12
        )
        # hinge: margin 0.02, target sim 0.1, source sim 0.3
        targets = np.zeros((1, dim)); targets[0, 0] = 0.1
        targets[0, 2] = math.sqrt(1 - 0.01)
        sources = np.zeros((1, dim)); sources[0, 0] = 0.3
        sources[0, 3] = math.sqrt(1 - 0.09)
        assert loss_rank(v, targets, sources, 0.02) == pytest.approx(0.22, abs=1e-12)


# === 3. render correctness ===================================================


def test_render_correctness():
    with criterion("render-correctness"):
        img = seeded_image(7, 64, 64)
        params = AtmosParams(0.6, 0.7, 0.1, 5.0, 42)
        out, field = render(img, params)
        expected = np.empty_like(img.pixels)
        for i in range(64):
            for j in range(64):
                a = params.opacity * field.mask[i, j]
                for c in range(3):
                    hazed = (1 - params.haze) * img.pixels[i, j, c] + params.haze * field.color[i, j, c]
                    expected[i, j, c] = min(max((1 - a) * hazed + a * field.color[i, j, c], 0.0), 1.0)
        assert float(np.max(np.abs(out.pixels - expected))) < 1e-6

        # identity: zero mask and zero haze reproduce the input bit-exactly
        zero_field = CloudField(
            mask=np.zeros((64, 64)),
            color=gen_cloud_color(params, 64, 64),
            opacity_map=np.zeros((64, 64)),
        )
        ident = compose(img, AtmosParams(0.6, 0.7, 0.0, 5.0, 42), zero_field)
        assert np.array_equal(ident.pixels, img.pixels)

        # 1000-case fuzz across the feasible box preserves [0, 1]
        rng = SplitMix64(31337)
        bounds = ParamBounds()
        base = seeded_image(8, 16, 16)
        for _ in range(1000):
            p = draw_uniform_params(bounds, rng)
            rendered, _ = render(base, p)
            assert rendered.pixels.min() >= 0.0
            assert rendered.pixels.max() <= 1.0


# === 4. DE transcript equivalence ============================================

MASK64 = (1 << 64) - 1


class _OracleStream:
    """Independent SplitMix64 from the published constants."""

    def __init__(self, seed):
        self.state = seed & MASK64

    def u64(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def f(self):
        return (self.u64() >> 11) / 9007199254740992.0

    def uniform(self, lo, hi):
        return lo + self.f() * (hi - lo)

    def randint(self, lo, hi):
        return min(lo + int(self.f() * (hi - lo + 1)), hi)

    def normal(self):
        u1, u2 = self.f(), self.f()
        if u1 <= 0.0:
            u1 = 1.0 / 9007199254740992.0
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def _stub_objective(vec, pairs):
    target = (0.55, 0.80, 0.05, 4.0, 2500.0)
    return sum(
        ((v - t) / (hi - lo)) ** 2 for v, t, (lo, hi) in zip(vec, target, pairs)
    )


def _oracle_full_run(seed, p, rounds, steps, f_weight, cr, local_scale, pairs):
    """Straight-line reimplementation of the whole optimization loop."""
    rng = _OracleStream(seed)
    events = []
    population = []
    for i in range(p):
        vec = [rng.uniform(lo, hi) for lo, hi in pairs]
        obj = _stub_objective(vec, pairs)
        events.append(("init", i, tuple(vec), obj))
        population.append((vec, obj))
    best_vec, best_obj = min(population, key=lambda c: c[1])
    trace = [best_obj]
    for r in range(1, rounds + 1):
        drawn = []
        for i in range(p):
            taken = {i}
            picks = []
            while len(picks) < 3:
                idx = rng.randint(0, p - 1)
                if idx not in taken:
                    taken.add(idx)
                    picks.append(idx)
            j_rand = rng.randint(0, 4)
            us = [rng.f() for _ in range(5)]
            drawn.append((picks[0], picks[1], picks[2], j_rand, us))
        trials = []
        for i, (a, b, c, j_rand, us) in enumerate(drawn):
            va, vb, vc = population[a][0], population[b][0], population[c][0]
            mutant = [
                min(max(va[d] + f_weight * (vb[d] - vc[d]), pairs[d][0]), pairs[d][1])
                for d in range(5)
            ]
            parent = population[i][0]
            trials.append(
                [mutant[d] if (us[d] < cr or d == j_rand) else parent[d] for d in range(5)]
            )
        for i, trial in enumerate(trials):
            obj = _stub_objective(trial, pairs)
            accepted = obj < population[i][1]
            a, b, c, j_rand, us = drawn[i]
            events.append(
                ("trial", r, i, a, b, c, j_rand, tuple(us), tuple(trial), obj, accepted)
            )
            if accepted:
                population[i] = (trial, obj)
        pop_vec, pop_obj = min(population, key=lambda c: c[1])
        if pop_obj < best_obj:
            best_vec, best_obj = pop_vec, pop_obj
        for step in range(steps):
            deltas = [rng.normal() * local_scale * (hi - lo) for lo, hi in pairs]
            cand = [
                min(max(best_vec[d] + deltas[d], pairs[d][0]), pairs[d][1])
                for d in range(5)
            ]
            obj = _stub_objective(cand, pairs)
            accepted = obj < best_obj
            events.append(("refine", r, step, tuple(deltas), tuple(cand), obj, accepted))
            if accepted:
                best_vec, best_obj = cand, obj
        trace.append(best_obj)
    return events, tuple(best_vec), best_obj, trace


def test_de_transcript_equivalence(toy_encoder, bench_corpus):
    with criterion("de-transcript-equivalence"):
        bounds = ParamBounds()
        pairs = bounds.as_pairs()
        seed = 0xC0FFEE

        def evaluate(vec):
            return _stub_objective(vec, pairs), {}

        rng = SplitMix64(seed)
        transcript = []
        population = []
        for i, vec in enumerate(init_population(bounds, 4, rng)):
            obj, bd = evaluate(vec)
            transcript.append(("init", i, tuple(vec), obj))
            population.append(Candidate(vec, obj, bd))
        best = min(population, key=lambda c: c.objective)
        trace = [best.objective]
        for r in (1, 2):
            de_round(population, bounds, 0.5, 0.7, rng, evaluate, round_index=r, transcript=transcript)
            pop_best = min(population, key=lambda c: c.objective)
            if pop_best.objective < best.objective:
                best = pop_best
            best = local_refine(best, bounds, 2, 0.05, rng, evaluate, round_index=r, transcript=transcript)
            trace.append(best.objective)

        events, oracle_vec, oracle_obj, oracle_trace = _oracle_full_run(
            seed, 4, 2, 2, 0.5, 0.7, 0.05, pairs
        )
        assert len(transcript) == len(events)
        for got, want in zip(transcript, events):
            assert got == want  # exact, including every float
        assert tuple(best.vector) == oracle_vec
        assert best.objective == oracle_obj
        assert trace == oracle_trace

        # monotone best objective and exact evaluation accounting over 20
        # seeded full runs at the production configuration
        img = seeded_image(11, 32, 32)
        for i in range(20):
            cfg = DEConfig(master_seed=5000 + i)
            rec = optimize_query(
                img, f"acc-{i}", bench_corpus, lexicon.WEATHER_CLOUD, toy_encoder, de_cfg=cfg
            )
            assert all(a >= b for a, b in zip(rec.objective_trace, rec.objective_trace[1:]))
            assert rec.evaluation_count == 8 + 8 * 8 + 2 * 8 + 1


# === 5. metric exactness =====================================================


def _micro_corpus(rows):
    """rows: (id, category, sim_clean, sim_adv); embeddings engineered so the
    clean query is axis 0 and the adversarial query is axis 1."""
    dim = 3 + len(rows)
    entries = []
    for i, (eid, cat, sc, sa) in enumerate(rows):
        vec = np.zeros(dim)
        vec[0], vec[1] = sc, sa
        vec[2 + i] = math.sqrt(max(0.0, 1.0 - sc * sc - sa * sa))
        entries.append(EvidenceEntry(id=eid, text=eid, category=cat, embedding=vec))
    clean_v = np.zeros(dim); clean_v[0] = 1.0
    adv_v = np.zeros(dim); adv_v[1] = 1.0
    return EvidenceCorpus(entries), clean_v, adv_v


SCENE, CLOUD = lexicon.SOURCE_SCENE, lexicon.WEATHER_CLOUD


def test_metric_exactness():
    with criterion("metric-exactness"):
        # ten hand-computed micro-corpora
        # 1: no change at all
        corpus, cv, av = _micro_corpus(
            [("a", SCENE, 0.65, 0.65), ("b", CLOUD, 0.5, 0.5), ("c", SCENE, 0.1, 0.1)]
        )
        clean, adv = topk(cv, corpus, 3), topk(av, corpus, 3)
        assert not metric_top_changed(clean, adv, 1)
        assert metric_weather_at_k(adv, 2, corpus) and not metric_weather_at_k(adv, 1, corpus)
        stats = mechanism_stats(cv, av, corpus, ["b"], ["a"])
        assert (stats.source_drop, stats.target_gain, stats.rank_improvement) == (0.0, 0.0, 0)

        # 2: weather jumps to rank 1
        corpus, cv, av = _micro_corpus(
            [("s1", SCENE, 0.8, 0.2), ("w1", CLOUD, 0.1, 0.9), ("s2", SCENE, 0.5, 0.4)]
        )
        clean, adv = topk(cv, corpus, 3), topk(av, corpus, 3)
        assert metric_top_changed(clean, adv, 1)
        assert metric_weather_at_k(adv, 1, corpus)
        stats = mechanism_stats(cv, av, corpus, ["w1"], ["s1", "s2"])
        assert stats.source_drop == pytest.approx((0.8 - 0.2 + 0.5 - 0.4) / 2)
        assert stats.target_gain == pytest.approx(0.8)
        assert (stats.clean_best_rank, stats.adv_best_rank) == (3, 1)
        assert stats.rank_improvement == 2
        assert stats.enter_top1 and stats.enter_top5 and stats.enter_top20

        # 3: permuted top-2 is not a set change
        corpus, cv, av = _micro_corpus(
            [("x", SCENE, 0.6, 0.5), ("y", SCENE, 0.5, 0.6), ("z", SCENE, 0.1, 0.1)]
        )
        clean, adv = topk(cv, corpus, 3), topk(av, corpus, 3)
        assert not metric_top_changed(clean, adv, 2)
        assert metric_top_changed(clean, adv, 1)

        # 4: exact tie resolved by corpus position
        corpus, cv, av = _micro_corpus(
            [("late", SCENE, 0.6, 0.6), ("early", SCENE, 0.6, 0.6)]
        )
        # both rows tie on similarity; "late" sits first in the corpus
        assert topk(cv, corpus, 1).ids() == ["late"]

        # 5: rank-101 sentinel when the target never enters the cap
        rows = [(f"s{i:03d}", SCENE, 0.65 - 0.001 * i, 0.65 - 0.001 * i) for i in range(110)]
        rows.append(("w", CLOUD, 0.01, 0.02))
        corpus, cv, av = _micro_corpus(rows)
        stats = mechanism_stats(cv, av, corpus, ["w"], ["s000"])
        assert stats.clean_best_rank == 101 and stats.adv_best_rank == 101
        assert stats.rank_improvement == 0 and not stats.enter_top20

        # 6: weather entry exactly at rank 5
        rows = [(f"s{i}", SCENE, 0.65 - 0.1 * i, 0.65 - 0.1 * i) for i in range(4)]
        rows.append(("w", CLOUD, 0.3, 0.3))
        rows.append(("s9", SCENE, 0.1, 0.1))
        corpus, cv, av = _micro_corpus(rows)
        adv = topk(av, corpus, 6)
        assert metric_weather_at_k(adv, 5, corpus) and not metric_weather_at_k(adv, 4, corpus)

        # 7: group-filtered weather metric
        rows = [
            ("f", lexicon.WEATHER_FOG_HAZE, 0.7, 0.7),
            ("c", CLOUD, 0.5, 0.5),
            ("s", SCENE, 0.3, 0.3),
        ]
        corpus, cv, av = _micro_corpus(rows)
        adv = topk(av, corpus, 3)
        assert metric_weather_at_k(adv, 1, corpus, group=lexicon.WEATHER_FOG_HAZE)
        assert not metric_weather_at_k(adv, 1, corpus, group=CLOUD)
        assert metric_weather_at_k(adv, 2, corpus, group=CLOUD)

        # 8: disjoint top-k
        corpus, cv, av = _micro_corpus(
            [("a", SCENE, 0.9, 0.1), ("b", SCENE, 0.8, 0.2), ("c", CLOUD, 0.1, 0.9), ("d", CLOUD, 0.2, 0.8)]
        )
        clean, adv = topk(cv, corpus, 4), topk(av, corpus, 4)
        assert metric_top_changed(clean, adv, 2)
        assert metric_weather_at_k(adv, 1, corpus)

        # 9: negative rank improvement (target falls)
        corpus, cv, av = _micro_corpus(
            [("w", CLOUD, 0.9, 0.1), ("s1", SCENE, 0.5, 0.5), ("s2", SCENE, 0.4, 0.45)]
        )
        stats = mechanism_stats(cv, av, corpus, ["w"], ["s1"])
        assert (stats.clean_best_rank, stats.adv_best_rank) == (1, 3)
        assert stats.rank_improvement == -2

        # 10: multiple targets, best-rank semantics
        corpus, cv, av = _micro_corpus(
            [("w1", CLOUD, 0.2, 0.6), ("w2", CLOUD, 0.1, 0.9), ("s1", SCENE, 0.8, 0.5), ("s2", SCENE, 0.7, 0.6)]
        )
        stats = mechanism_stats(cv, av, corpus, ["w1", "w2"], ["s1", "s2"])
        assert (stats.clean_best_rank, stats.adv_best_rank) == (3, 1)
        assert stats.target_gain == pytest.approx(((0.6 - 0.2) + (0.9 - 0.1)) / 2)

        # brute-force agreement with a full-sort oracle on 1000 instances
        rng = SplitMix64(777)
        for case in range(1000):
            n = 4 + int(rng.next_float() * 24)
            dim = 4 + int(rng.next_float() * 8)
            raw = rng.floats(n * dim).reshape(n, dim) - 0.5
            entries = []
            for i in range(n):
                vec = raw[i]
                if i > 0 and rng.next_float() < 0.25:
                    vec = raw[int(rng.next_float() * i)]
                entries.append(
                    EvidenceEntry(
                        id=f"e{i}", text="t", category=SCENE, embedding=normalize(vec)
                    )
                )
            corpus = EvidenceCorpus(entries)
            q = normalize(rng.floats(dim) - 0.5)
            k = 1 + int(rng.next_float() * n)
            scores = corpus.matrix @ q
            want = [
                corpus.entries[i].id
                for i in sorted(range(n), key=lambda i: (-scores[i], i))[:k]
            ]
            assert topk(q, corpus, k).ids() == want


# === 6. end-to-end desk-scale ordering =======================================


def test_end_to_end_ordering(bench_runs):
    with criterion("end-to-end-ordering"):
        runs, elapsed = bench_runs
        assert elapsed < 600.0, f"benchmark runs took {elapsed:.0f}s"
        means = {}
        for method in ("optimized", "fixed_cloud", "clean"):
            vals = []
            for seed in SEEDS:
                rows = {r["method"]: r for r in runs[seed][1]["aggregate"]}
                vals.append(rows[method]["W@5"])
            means[method] = float(np.mean(vals))
        assert means["optimized"] > means["fixed_cloud"] > means["clean"], means

        improved = total = 0
        for seed in SEEDS:
            out = runs[seed][0]
            for name in sorted(os.listdir(os.path.join(out, "records"))):
                with open(os.path.join(out, "records", name)) as fh:
                    rec = json.load(fh)
                trace = rec["methods"]["optimized"]["objective_trace"]
                improved += trace[-1] < trace[0]
                total += 1
        assert improved / total >= 0.90, f"strict improvement only {improved}/{total}"
        print(
            f"\n  W@5 means: optimized={means['optimized']:.2f} "
            f"fixed={means['fixed_cloud']:.2f} clean={means['clean']:.2f}; "
            f"strict improvement {improved}/{total}; runtime {elapsed:.0f}s"
        )


# === 7. ablation direction ===================================================


def test_ablation_direction(bench_runs, ablation_runs):
    with criterion("ablation-direction"):
        runs, _ = bench_runs
        full = float(np.mean([
            {r["method"]: r for r in runs[s][1]["aggregate"]}["optimized"]["W@5"]
            for s in SEEDS
        ]))
        ablated = float(np.mean([
            {r["method"]: r for r in ablation_runs[s][1]["aggregate"]}["optimized"]["W@5"]
            for s in SEEDS
        ]))
        print(f"\n  mean W@5: full={full:.2f} no-ltar={ablated:.2f}")
        assert ablated < full, (full, ablated)


# === 8. robustness persistence ===============================================


def test_robustness_persistence(bench_runs):
    with criterion("robustness-persistence"):
        runs, _ = bench_runs
        out, report = runs[SEEDS[0]]
        rows = cmd_robustness(out, ["identity", "blur:1", "jpeg:50"], log=quiet)
        base = {r["method"]: r for r in report["aggregate"]}
        for row in rows:
            method = row["method"]
            if row["transform"] == "identity":
                for key, val in row.items():
                    if key.startswith(("T@", "W@")):
                        assert val == base[method][key], (method, key)
            elif method == "optimized":
                w5, w5_base = row["W@5"], base[method]["W@5"]
                assert abs(w5 - w5_base) <= 0.5 * w5_base, (row["transform"], w5, w5_base)


# === 9. determinism ==========================================================


def test_determinism(tmp_path):
    with criterion("determinism"):
        cfg = RunConfig(
            benchmark_queries=5,
            de=DEConfig(population=4, rounds=2, local_steps=1, master_seed=99),
            k_list=(1, 5),
        )
        out1, out2 = str(tmp_path / "d1"), str(tmp_path / "d2")
        cmd_attack(cfg, out1, log=quiet)
        cmd_attack(cfg, out2, log=quiet)
        for name in sorted(os.listdir(os.path.join(out1, "records"))):
            a = open(os.path.join(out1, "records", name), "rb").read()
            b = open(os.path.join(out2, "records", name), "rb").read()
            assert a == b, f"record {name} differs"
        assert (
            open(os.path.join(out1, "aggregate.csv"), "rb").read()
            == open(os.path.join(out2, "aggregate.csv"), "rb").read()
        )


# === 10. defense formulas ====================================================


def test_defense_formulas(toy_encoder):
    with criterion("defense-formulas"):
        a = frozenset("abcde")
        assert jaccard_instability(a, a) == 0.0
        assert jaccard_instability(a, frozenset("pqrst")) == 1.0
        assert jaccard_instability(a, frozenset("abcxy")) == pytest.approx(1 - 3 / 7)

        # rerank no-op preserves the full ranking exactly
        corpus = build_benchmark_corpus(toy_encoder)
        v = toy_encoder.encode_image(texture_query(4))
        full_rank = topk(v, corpus, len(corpus))
        rr = rerank_result(full_rank, corpus, 0.0, 0.0)
        assert rr.ids() == full_rank.ids()
        assert [s for _, s in rr.ranked] == [s for _, s in full_rank.ranked]

        wins = 0
        for seed in range(20):
            clean = texture_query(seed)
            adv = fixed_cloud_baseline(clean, 4000 + seed).quantize8()
            wins += atmospheric_risk_score(adv) > atmospheric_risk_score(clean)
        assert wins >= 18, f"risk separated only {wins}/20"
