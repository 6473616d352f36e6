"""Derivative-free search over the atmospheric parameter box.

Classic rand/1/bin differential evolution with greedy replacement, plus a
short local refinement of the tracked best after every round. The seed
dimension participates in the arithmetic as a continuous value and is
rounded when a parameter vector is materialized for rendering.

Randomness contract (what the seeded transcript freezes): one stream per
query, seeded by derive_seed(master_seed, "query", query_id). Draw order:

1. population init: P vectors, each 5 uniforms in dimension order;
2. per round, for each index i in order: indices a, b, c drawn by
   rejection (each a randint in [0, P-1] redrawn until distinct from i
   and the earlier picks), then j_rand = randint(0, 4), then 5 crossover
   uniforms - all trials of a round are drawn before any is evaluated,
   which keeps the stream independent of evaluation concurrency;
3. per refinement step: 5 standard normals (two uniforms each).

Greedy selection makes the best objective non-increasing; the optimizer
asserts that on every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .atmosphere import AtmosParams, ParamBounds, render
from .encoders import EncoderError
from .imaging import Image
from .objective import ObjectiveConfig, total_objective
from .prng import SplitMix64, derive_seed
from .retrieval import (
    EvidenceCorpus,
    RetrievalResult,
    MechanismStats,
    mechanism_stats,
    metric_top_changed,
    metric_weather_at_k,
    select_sets,
    topk,
)

INFEASIBLE = math.inf  # objective sentinel for failed evaluations


@dataclass(frozen=True)
class DEConfig:
    population: int = 8
    rounds: int = 8
    local_steps: int = 2
    diff_weight: float = 0.5
    crossover_rate: float = 0.7
    local_scale: float = 0.05  # fraction of each bound range
    master_seed: int = 20260421

    def __post_init__(self):
        if self.population < 4:
            raise ValueError("population must be >= 4 for rand/1 mutation")
        if not 0.0 <= self.crossover_rate <= 1.0:
            raise ValueError("crossover_rate must be in [0, 1]")
        if self.rounds < 0 or self.local_steps < 0:
            raise ValueError("rounds and local_steps must be >= 0")

    def evaluation_budget(self) -> int:
        """Image-encode calls per query: P + P*R + L*R + 1 (final re-encode)."""
        return (
            self.population
            + self.population * self.rounds
            + self.local_steps * self.rounds
            + 1
        )

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "rounds": self.rounds,
            "local_steps": self.local_steps,
            "diff_weight": self.diff_weight,
            "crossover_rate": self.crossover_rate,
            "local_scale": self.local_scale,
            "master_seed": self.master_seed,
        }


@dataclass
class Candidate:
    vector: list[float]
    objective: float
    breakdown: dict[str, float]

    @property
    def params(self) -> AtmosParams:
        return AtmosParams.from_vector(self.vector)


@dataclass
class AttackRecord:
    query_id: str
    group: str
    clean_embedding: np.ndarray
    theta_star: AtmosParams
    adv_embedding: np.ndarray
    objective: float
    term_breakdown: dict[str, float]
    objective_trace: tuple[float, ...]
    clean_topk: RetrievalResult
    adv_topk: RetrievalResult
    flags: dict[str, bool]
    mechanism: MechanismStats
    evaluation_count: int
    eval_failures: int
    target_ids: tuple[str, ...]
    source_ids: tuple[str, ...]


def init_population(bounds: ParamBounds, p: int, rng: SplitMix64) -> list[list[float]]:
    """P independent uniform draws from the feasible box."""
    if p < 4:
        raise ValueError("population must be >= 4")
    return [bounds.uniform_vector(rng) for _ in range(p)]


def _distinct_indices(rng: SplitMix64, p: int, exclude_from: int) -> tuple[int, int, int]:
    taken = {exclude_from}
    picks = []
    while len(picks) < 3:
        idx = rng.randint(0, p - 1)
        if idx not in taken:
            taken.add(idx)
            picks.append(idx)
    return picks[0], picks[1], picks[2]


def de_round(
    population: list[Candidate],
    bounds: ParamBounds,
    diff_weight: float,
    crossover_rate: float,
    rng: SplitMix64,
    evaluate,
    round_index: int = 0,
    transcript: list | None = None,
) -> int:
    """One generation of rand/1/bin with greedy replacement, in place.

    All random choices for the round are drawn before any trial is
    evaluated, so trial evaluations may be dispatched concurrently
    without touching the stream. Returns the number of replacements.
    """
    p = len(population)
    if p < 4:
        raise ValueError("population must be >= 4")
    pairs = bounds.as_pairs()
    drawn = []
    for i in range(p):
        a, b, c = _distinct_indices(rng, p, i)
        j_rand = rng.randint(0, 4)
        us = [rng.next_float() for _ in range(5)]
        drawn.append((a, b, c, j_rand, us))

    trials: list[list[float]] = []
    for i, (a, b, c, j_rand, us) in enumerate(drawn):
        va, vb, vc = population[a].vector, population[b].vector, population[c].vector
        mutant = [
            min(max(va[d] + diff_weight * (vb[d] - vc[d]), pairs[d][0]), pairs[d][1])
            for d in range(5)
        ]
        parent = population[i].vector
        trial = [
            mutant[d] if (us[d] < crossover_rate or d == j_rand) else parent[d]
            for d in range(5)
        ]
        trials.append(trial)

    replaced = 0
    for i, trial in enumerate(trials):
        obj, breakdown = evaluate(trial)
        accepted = obj < population[i].objective
        if transcript is not None:
            a, b, c, j_rand, us = drawn[i]
            transcript.append(
                ("trial", round_index, i, a, b, c, j_rand, tuple(us), tuple(trial), obj, accepted)
            )
        if accepted:
            population[i] = Candidate(trial, obj, breakdown)
            replaced += 1
    return replaced


def local_refine(
    best: Candidate,
    bounds: ParamBounds,
    steps: int,
    local_scale: float,
    rng: SplitMix64,
    evaluate,
    round_index: int = 0,
    transcript: list | None = None,
) -> Candidate:
    """Greedy Gaussian hill-climb around the current best."""
    pairs = bounds.as_pairs()
    for step in range(steps):
        deltas = [rng.normal() * local_scale * (hi - lo) for lo, hi in pairs]
        cand = [
            min(max(best.vector[d] + deltas[d], pairs[d][0]), pairs[d][1])
            for d in range(5)
        ]
        obj, breakdown = evaluate(cand)
        accepted = obj < best.objective
        if transcript is not None:
            transcript.append(
                ("refine", round_index, step, tuple(deltas), tuple(cand), obj, accepted)
            )
        if accepted:
            best = Candidate(cand, obj, breakdown)
    return best


def optimize_query(
    query: Image,
    query_id: str,
    corpus: EvidenceCorpus,
    group: str,
    encoder,
    de_cfg: DEConfig | None = None,
    obj_cfg: ObjectiveConfig | None = None,
    bounds: ParamBounds | None = None,
    topm: int = 20,
    clean_k: int = 20,
    k_list: tuple[int, ...] = (1, 5, 10, 20),
    transcript: list | None = None,
) -> AttackRecord:
    """Full per-query attack: evidence selection, DE search, re-retrieval.

    The returned record carries everything the scaling/transfer/robustness
    stages need so they can recompute metrics without new encoder calls.
    """
    de_cfg = de_cfg or DEConfig()
    obj_cfg = obj_cfg or ObjectiveConfig()
    bounds = bounds or ParamBounds()
    rng = SplitMix64(derive_seed(de_cfg.master_seed, "query", query_id))

    clean_v = encoder.encode_image(query)
    max_k = min(max(k_list), len(corpus))
    clean_result = topk(clean_v, corpus, max_k)
    split = select_sets(clean_v, corpus, group, topm=topm, clean_k=clean_k)

    eval_count = 0
    eval_failures = 0

    def evaluate(vector: list[float]) -> tuple[float, dict[str, float]]:
        nonlocal eval_count, eval_failures
        eval_count += 1
        params = AtmosParams.from_vector(vector)
        rendered, cloud = render(query, params)
        try:
            return total_objective(
                rendered, cloud.mask, params.edge_softness, split, obj_cfg, encoder
            )
        except EncoderError:
            eval_failures += 1
            return INFEASIBLE, {}

    population: list[Candidate] = []
    for i, vec in enumerate(init_population(bounds, de_cfg.population, rng)):
        obj, breakdown = evaluate(vec)
        if transcript is not None:
            transcript.append(("init", i, tuple(vec), obj))
        population.append(Candidate(vec, obj, breakdown))

    best = min(population, key=lambda c: c.objective)
    trace = [best.objective]

    for r in range(1, de_cfg.rounds + 1):
        de_round(
            population,
            bounds,
            de_cfg.diff_weight,
            de_cfg.crossover_rate,
            rng,
            evaluate,
            round_index=r,
            transcript=transcript,
        )
        pop_best = min(population, key=lambda c: c.objective)
        if pop_best.objective < best.objective:
            best = pop_best
        best = local_refine(
            best,
            bounds,
            de_cfg.local_steps,
            de_cfg.local_scale,
            rng,
            evaluate,
            round_index=r,
            transcript=transcript,
        )
        trace.append(best.objective)

    # greedy selection guarantees this on every run, not just under test
    assert all(a >= b for a, b in zip(trace, trace[1:])), "objective trace regressed"

    theta_star = best.params
    adv_img, _ = render(query, theta_star)
    adv_img = adv_img.quantize8()  # metrics are computed on what gets saved
    adv_v = encoder.encode_image(adv_img)
    eval_count += 1
    if transcript is not None:
        transcript.append(("final", tuple(best.vector), best.objective))

    budget = de_cfg.evaluation_budget()
    assert eval_count == budget, f"evaluation count {eval_count} != budget {budget}"

    adv_result = topk(adv_v, corpus, max_k)
    flags = {}
    for k in k_list:
        k_eff = min(k, len(corpus))
        flags[f"T@{k}"] = metric_top_changed(clean_result, adv_result, k_eff)
        flags[f"W@{k}"] = metric_weather_at_k(adv_result, k_eff, corpus, group=None)
    stats = mechanism_stats(
        clean_v, adv_v, corpus, split.target_ids, split.source_ids
    )

    return AttackRecord(
        query_id=query_id,
        group=group,
        clean_embedding=clean_v,
        theta_star=theta_star,
        adv_embedding=adv_v,
        objective=best.objective,
        term_breakdown=best.breakdown,
        objective_trace=tuple(trace),
        clean_topk=clean_result,
        adv_topk=adv_result,
        flags=flags,
        mechanism=stats,
        evaluation_count=eval_count,
        eval_failures=eval_failures,
        target_ids=split.target_ids,
        source_ids=split.source_ids,
    )
