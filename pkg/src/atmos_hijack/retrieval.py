"""Evidence corpus, cosine top-k search, and the retrieval metric suite.

Search is an exact brute-force scan (partial selection, not a full sort);
ties break toward the earlier corpus position so rankings are fully
deterministic. Metrics follow the attack-evaluation conventions: T@k is a
set comparison of clean vs adversarial top-k, W@k asks whether any
weather-category evidence entered the adversarial top-k, and the
mechanism statistics track similarity shifts and best-target rank
movement with ranks capped at 101.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass

import numpy as np

from . import lexicon
from .encoders import normalize, read_vectors_sidecar, write_vectors_sidecar
from .objective import EvidenceSplit
from .prng import SplitMix64

RANK_CAP = 100  # best-target ranks deeper than this report the 101 sentinel


@dataclass(frozen=True)
class EvidenceEntry:
    id: str
    text: str
    category: str
    embedding: np.ndarray

    def __post_init__(self):
        if self.category not in lexicon.CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        emb = np.asarray(self.embedding, dtype=np.float64)
        norm = float(np.linalg.norm(emb))
        if abs(norm - 1.0) > 1e-4:
            raise ValueError(f"entry {self.id!r} embedding norm {norm} not unit")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)


class EvidenceCorpus:
    """Ordered, immutable evidence list with a cached embedding matrix."""

    def __init__(self, entries: list[EvidenceEntry]):
        if not entries:
            raise ValueError("empty corpus")
        dims = {e.embedding.size for e in entries}
        if len(dims) != 1:
            raise ValueError(f"mixed embedding dims: {sorted(dims)}")
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate entry ids")
        self.entries = list(entries)
        self.dim = dims.pop()
        self.matrix = np.stack([e.embedding for e in entries])
        self.matrix.setflags(write=False)
        self._index = {e.id: i for i, e in enumerate(entries)}

    def __len__(self) -> int:
        return len(self.entries)

    def position(self, entry_id: str) -> int:
        return self._index[entry_id]

    def entry(self, entry_id: str) -> EvidenceEntry:
        return self.entries[self._index[entry_id]]

    def category_of(self, entry_id: str) -> str:
        return self.entry(entry_id).category

    def positions_of_category(self, category: str) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.category == category]


@dataclass(frozen=True)
class RetrievalResult:
    """(id, similarity) pairs, score-descending, position tie-break."""

    ranked: tuple[tuple[str, float], ...]

    def ids(self, k: int | None = None) -> list[str]:
        pairs = self.ranked if k is None else self.ranked[:k]
        return [i for i, _ in pairs]

    def id_set(self, k: int) -> frozenset[str]:
        return frozenset(self.ids(k))

    def __len__(self) -> int:
        return len(self.ranked)


def cosine_sim(a: np.ndarray, b: np.ndarray) -> float:
    if a.shape != b.shape:
        raise ValueError(f"dim mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def topk(v: np.ndarray, corpus: EvidenceCorpus, k: int) -> RetrievalResult:
    """Exact top-k by cosine, earlier corpus position wins ties."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if v.size != corpus.dim:
        raise ValueError(f"dim mismatch: query {v.size} vs corpus {corpus.dim}")
    scores = corpus.matrix @ v
    n = len(corpus)
    k = min(k, n)
    if k == n:
        chosen = np.arange(n)
    else:
        # partial selection, then resolve boundary ties by position
        part = np.argpartition(-scores, k - 1)[:k]
        boundary = float(scores[part].min())
        above = np.nonzero(scores > boundary)[0]
        at = np.nonzero(scores == boundary)[0]  # ascending position
        chosen = np.concatenate([above, at[: k - above.size]])
    order = np.lexsort((chosen, -scores[chosen]))
    chosen = chosen[order]
    return RetrievalResult(
        ranked=tuple(
            (corpus.entries[i].id, float(scores[i])) for i in chosen
        )
    )


def rank_of_best(
    v: np.ndarray, corpus: EvidenceCorpus, entry_ids, cap: int = RANK_CAP
) -> int:
    """1-based rank of the best-ranked listed entry, capped at cap+1.

    Computed by counting strictly-better rows (ties by position), so no
    full sort is needed.
    """
    scores = corpus.matrix @ v
    best = cap + 1
    for entry_id in entry_ids:
        pos = corpus.position(entry_id)
        s = scores[pos]
        ahead = int(np.sum(scores > s)) + int(
            np.sum((scores == s) & (np.arange(len(corpus)) < pos))
        )
        best = min(best, min(ahead + 1, cap + 1))
    return best


def select_sets(
    clean_v: np.ndarray,
    corpus: EvidenceCorpus,
    group: str,
    topm: int = 20,
    clean_k: int = 20,
) -> EvidenceSplit:
    """Pick target and source evidence for one query.

    Targets: the topm entries of the requested weather group closest to
    the clean embedding. Sources: the clean top-clean_k entries of any
    category, minus any overlap with the targets.
    """
    if group not in lexicon.WEATHER_GROUPS:
        raise ValueError(f"not a weather group: {group!r}")
    group_positions = corpus.positions_of_category(group)
    if not group_positions:
        raise ValueError(f"corpus has no entries of group {group!r}")
    scores = corpus.matrix @ clean_v

    by_pref = sorted(group_positions, key=lambda i: (-scores[i], i))
    target_pos = by_pref[:topm]
    target_ids = [corpus.entries[i].id for i in target_pos]

    clean_top = topk(clean_v, corpus, clean_k)
    source_ids = [i for i in clean_top.ids() if i not in set(target_ids)]
    if not source_ids:
        # degenerate case: clean retrieval is all targets; fall back to the
        # best non-target entries so the split stays non-empty
        rest = sorted(
            (i for i in range(len(corpus)) if corpus.entries[i].id not in set(target_ids)),
            key=lambda i: (-scores[i], i),
        )
        if not rest:
            raise ValueError("corpus has no non-target entries for the source set")
        source_ids = [corpus.entries[i].id for i in rest[:clean_k]]

    source_pos = [corpus.position(i) for i in source_ids]
    return EvidenceSplit(
        targets=corpus.matrix[target_pos],
        sources=corpus.matrix[source_pos],
        target_ids=tuple(target_ids),
        source_ids=tuple(source_ids),
    )


def metric_top_changed(clean: RetrievalResult, adv: RetrievalResult, k: int) -> bool:
    """True iff the top-k id sets differ (order is ignored)."""
    if len(clean) < k or len(adv) < k:
        raise ValueError(f"results shorter than k={k}")
    return clean.id_set(k) != adv.id_set(k)


def metric_weather_at_k(
    adv: RetrievalResult,
    k: int,
    corpus: EvidenceCorpus,
    group: str | None = None,
) -> bool:
    """True iff a weather entry (optionally of one group) is in the top-k."""
    if len(adv) < k:
        raise ValueError(f"result shorter than k={k}")
    for entry_id in adv.ids(k):
        category = corpus.category_of(entry_id)
        if group is None:
            if category in lexicon.WEATHER_GROUPS:
                return True
        elif category == group:
            return True
    return False


@dataclass(frozen=True)
class MechanismStats:
    source_drop: float
    target_gain: float
    clean_best_rank: int
    adv_best_rank: int
    rank_improvement: int
    enter_top1: bool
    enter_top5: bool
    enter_top20: bool

    def to_dict(self) -> dict:
        return {
            "source_drop": self.source_drop,
            "target_gain": self.target_gain,
            "clean_best_rank": self.clean_best_rank,
            "adv_best_rank": self.adv_best_rank,
            "rank_improvement": self.rank_improvement,
            "enter_top1": self.enter_top1,
            "enter_top5": self.enter_top5,
            "enter_top20": self.enter_top20,
        }


def mechanism_stats(
    clean_v: np.ndarray,
    adv_v: np.ndarray,
    corpus: EvidenceCorpus,
    target_ids,
    source_ids,
    rank_cap: int = RANK_CAP,
) -> MechanismStats:
    """Similarity shifts and best-target rank movement for one query."""
    if not target_ids or not source_ids:
        raise ValueError("target and source id lists must be non-empty")
    t_pos = [corpus.position(i) for i in target_ids]
    s_pos = [corpus.position(i) for i in source_ids]
    clean_scores = corpus.matrix @ clean_v
    adv_scores = corpus.matrix @ adv_v
    source_drop = float(np.mean(clean_scores[s_pos] - adv_scores[s_pos]))
    target_gain = float(np.mean(adv_scores[t_pos] - clean_scores[t_pos]))
    clean_rank = rank_of_best(clean_v, corpus, target_ids, cap=rank_cap)
    adv_rank = rank_of_best(adv_v, corpus, target_ids, cap=rank_cap)
    return MechanismStats(
        source_drop=source_drop,
        target_gain=target_gain,
        clean_best_rank=clean_rank,
        adv_best_rank=adv_rank,
        rank_improvement=clean_rank - adv_rank,
        enter_top1=adv_rank <= 1,
        enter_top5=adv_rank <= 5,
        enter_top20=adv_rank <= 20,
    )


def subsample_corpus(corpus: EvidenceCorpus, size: int, seed: int) -> EvidenceCorpus:
    """Seeded uniform subsample preserving order.

    Every weather group present in the parent keeps at least one entry
    (forced inclusion), swapping out seeded non-weather picks if needed.
    """
    n = len(corpus)
    if not 1 <= size <= n:
        raise ValueError(f"size {size} out of range 1..{n}")
    if size == n:
        return EvidenceCorpus(list(corpus.entries))
    rng = SplitMix64(seed)
    picked = set(rng.sample_indices(n, size))

    for group in lexicon.WEATHER_GROUPS:
        positions = corpus.positions_of_category(group)
        if not positions or any(p in picked for p in positions):
            continue
        forced = positions[rng.randint(0, len(positions) - 1)]
        swappable = sorted(
            p
            for p in picked
            if corpus.entries[p].category not in lexicon.WEATHER_GROUPS
        ) or sorted(picked)
        picked.discard(swappable[rng.randint(0, len(swappable) - 1)])
        picked.add(forced)

    return EvidenceCorpus([corpus.entries[i] for i in sorted(picked)])


# --- corpus files -----------------------------------------------------------
#
# JSONL, one entry per line: {"id", "text", "category", "embedding"}.
# Alternatively a manifest JSON referencing a float32 sidecar, in which
# case lines omit "embedding" and vectors pair with lines by order.


def save_corpus(
    corpus: EvidenceCorpus, path: str | os.PathLike, sidecar: bool = False
) -> None:
    path = os.fspath(path)
    if sidecar:
        base = path[: -len(".json")] if path.endswith(".json") else path
        lines_path = base + ".jsonl"
        vec_path = base + ".ahc1"
        with open(lines_path, "w", encoding="utf-8") as fh:
            for e in corpus.entries:
                fh.write(
                    json.dumps(
                        {"id": e.id, "text": e.text, "category": e.category},
                        sort_keys=True,
                    )
                    + "\n"
                )
        write_vectors_sidecar(vec_path, corpus.matrix)
        manifest = {
            "format": "corpus-manifest",
            "dim": int(corpus.dim),
            "texts": os.path.basename(lines_path),
            "vectors": os.path.basename(vec_path),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, sort_keys=True, indent=1)
        return
    with open(path, "w", encoding="utf-8") as fh:
        for e in corpus.entries:
            fh.write(
                json.dumps(
                    {
                        "id": e.id,
                        "text": e.text,
                        "category": e.category,
                        "embedding": [float(x) for x in e.embedding],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_corpus(path: str | os.PathLike) -> EvidenceCorpus:
    path = os.fspath(path)
    with open(path, encoding="utf-8") as fh:
        first = fh.read(1)
        fh.seek(0)
        if first == "{" and path.endswith(".json"):
            manifest = json.load(fh)
        else:
            manifest = None
        if manifest is not None and manifest.get("format") == "corpus-manifest":
            root = os.path.dirname(path) or "."
            vectors = read_vectors_sidecar(os.path.join(root, manifest["vectors"]))
            entries = []
            with open(os.path.join(root, manifest["texts"]), encoding="utf-8") as lf:
                for i, line in enumerate(lf):
                    row = json.loads(line)
                    entries.append(
                        EvidenceEntry(
                            id=row["id"],
                            text=row["text"],
                            category=row["category"],
                            embedding=normalize(vectors[i]),
                        )
                    )
            return EvidenceCorpus(entries)
        entries = []
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            entries.append(
                EvidenceEntry(
                    id=row["id"],
                    text=row["text"],
                    category=row["category"],
                    embedding=normalize(row["embedding"]),
                )
            )
    return EvidenceCorpus(entries)
