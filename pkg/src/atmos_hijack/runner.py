"""Experiment orchestration: attacks, baselines, and the derived reports.

An attack run writes a self-contained output directory: the resolved
config with its hash, a snapshot of the corpus (with embeddings), one
JSON record per query holding clean/adversarial embeddings and rankings,
adversarial PNGs, and an aggregate CSV. Robustness, scaling, transfer,
defense, and verification all work from those artifacts; scaling in
particular re-reads stored embeddings and never touches an encoder.

Reports are byte-deterministic for a fixed config and seed: JSON is
sorted-key, CSV cells are full-precision reprs, and wall-clock timings go
to a separate file.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import lexicon
from .atmosphere import (
    AtmosParams,
    FIXED_BASELINE,
    ParamBounds,
    draw_uniform_params,
    render,
)
from .benchmark import benchmark_queries, benchmark_texts
from .defense import DefenseConfig, atmospheric_risk_score, instability_score, rerank_result
from .encoders import DimMismatch, EncoderError, make_encoder
from .imaging import Image, brightness_haze_baseline, gaussian_blur, jpeg_distortion, load_image, resize_bilinear, save_image
from .objective import ObjectiveConfig
from .optimizer import AttackRecord, DEConfig, optimize_query
from .prng import SplitMix64, derive_seed
from .retrieval import (
    EvidenceCorpus,
    EvidenceEntry,
    RetrievalResult,
    load_corpus,
    mechanism_stats,
    metric_top_changed,
    metric_weather_at_k,
    save_corpus,
    select_sets,
    subsample_corpus,
    topk,
)

METHOD_OPTIMIZED = "optimized"
DEFAULT_METHODS = (
    "clean",
    "gaussian_blur",
    "brightness_haze",
    "random_cloud",
    "fixed_cloud",
    METHOD_OPTIMIZED,
)
DEFAULT_TRANSFORMS = ("jpeg:30", "jpeg:50", "jpeg:80", "blur:1", "blur:2", "resize:0.5", "resize:0.75")

ABLATION_SWITCHES = (
    "full",
    "no-ltar",
    "no-lsrc",
    "no-lrank",
    "no-lnat",
    "no-larea",
    "low-opacity",
    "low-severity",
    "no-haze",
    "no-softness",
)


@dataclass(frozen=True)
class RunConfig:
    encoder_spec: str = "toy"
    corpus_path: str = "benchmark"  # "benchmark" builds the shipped fixture
    queries: tuple[tuple[str, str], ...] = ()  # (id, path); empty -> benchmark
    benchmark_queries: int = 50
    target_group: str = lexicon.WEATHER_CLOUD
    de: DEConfig = field(default_factory=DEConfig)
    objective: ObjectiveConfig = field(default_factory=ObjectiveConfig)
    bounds: ParamBounds = field(default_factory=ParamBounds)
    k_list: tuple[int, ...] = (1, 5, 10, 20)
    methods: tuple[str, ...] = DEFAULT_METHODS
    transforms: tuple[str, ...] = DEFAULT_TRANSFORMS
    blur_sigma: float = 2.0
    haze_strength: float = 0.35
    topm: int = 20
    clean_k: int = 20
    workers: int = 1
    filter_weather_top5: bool = False

    def semantic_dict(self) -> dict:
        """Fields that affect results (hashed); excludes workers/output knobs."""
        return {
            "encoder_spec": self.encoder_spec,
            "corpus_path": self.corpus_path,
            "queries": [list(q) for q in self.queries],
            "benchmark_queries": self.benchmark_queries,
            "target_group": self.target_group,
            "de": self.de.to_dict(),
            "objective": self.objective.to_dict(),
            "bounds": [list(p) for p in self.bounds.as_pairs()],
            "k_list": list(self.k_list),
            "methods": list(self.methods),
            "blur_sigma": self.blur_sigma,
            "haze_strength": self.haze_strength,
            "topm": self.topm,
            "clean_k": self.clean_k,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]

    @staticmethod
    def from_dict(d: dict) -> "RunConfig":
        kwargs = dict(d)
        if "de" in kwargs:
            kwargs["de"] = DEConfig(**kwargs["de"])
        if "objective" in kwargs:
            kwargs["objective"] = ObjectiveConfig(**kwargs["objective"])
        if "bounds" in kwargs:
            pairs = kwargs["bounds"]
            kwargs["bounds"] = ParamBounds(*[tuple(p) for p in pairs])
        if "queries" in kwargs:
            kwargs["queries"] = tuple(tuple(q) for q in kwargs["queries"])
        for name in ("k_list", "methods", "transforms"):
            if name in kwargs:
                kwargs[name] = tuple(kwargs[name])
        return RunConfig(**kwargs)


def parse_transform(spec: str):
    """Transform spec -> (name, Image -> Image callable)."""
    if spec == "identity":
        return spec, lambda img: img
    kind, _, arg = spec.partition(":")
    if kind == "jpeg":
        quality = int(arg)
        return spec, lambda img: jpeg_distortion(img, quality).quantize8()
    if kind == "blur":
        sigma = float(arg)
        return spec, lambda img: gaussian_blur(img, sigma).quantize8()
    if kind == "resize":
        factor = float(arg)

        def _resize(img: Image) -> Image:
            h = max(8, int(round(img.height * factor)))
            w = max(8, int(round(img.width * factor)))
            down = resize_bilinear(img, h, w)
            return resize_bilinear(down, img.height, img.width).quantize8()

        return spec, _resize
    raise ValueError(f"unknown transform spec {spec!r}")


def load_queries(cfg: RunConfig) -> list[tuple[str, Image]]:
    if cfg.queries:
        return [(qid, load_image(path)) for qid, path in cfg.queries]
    return benchmark_queries(cfg.benchmark_queries)


def resolve_corpus(cfg: RunConfig, encoder) -> EvidenceCorpus:
    if cfg.corpus_path == "benchmark":
        entries = [
            EvidenceEntry(id=i, text=t, category=c, embedding=encoder.encode_text(t))
            for i, t, c in benchmark_texts()
        ]
        return EvidenceCorpus(entries)
    return load_corpus(cfg.corpus_path)


# --- per-query execution ----------------------------------------------------


def run_single_query(
    qid: str,
    img: Image,
    cfg: RunConfig,
    corpus: EvidenceCorpus,
    encoder,
    image_dir: str | None = None,
) -> dict:
    """Attack one query with every configured method; returns the JSON record."""
    master = cfg.de.master_seed
    record: dict = {"query_id": qid, "failed": False, "group": cfg.target_group}
    methods: dict[str, dict] = {}

    attack_rec: AttackRecord | None = None
    if METHOD_OPTIMIZED in cfg.methods:
        attack_rec = optimize_query(
            img,
            qid,
            corpus,
            cfg.target_group,
            encoder,
            de_cfg=cfg.de,
            obj_cfg=cfg.objective,
            bounds=cfg.bounds,
            topm=cfg.topm,
            clean_k=cfg.clean_k,
            k_list=cfg.k_list,
        )
        clean_v = attack_rec.clean_embedding
        clean_result = attack_rec.clean_topk
        target_ids = attack_rec.target_ids
        source_ids = attack_rec.source_ids
    else:
        clean_v = encoder.encode_image(img)
        clean_result = topk(clean_v, corpus, min(max(cfg.k_list), len(corpus)))
        split = select_sets(
            clean_v, corpus, cfg.target_group, topm=cfg.topm, clean_k=cfg.clean_k
        )
        target_ids = split.target_ids
        source_ids = split.source_ids

    record["clean"] = {
        "embedding": [float(x) for x in clean_v],
        "topk": [[i, s] for i, s in clean_result.ranked],
    }
    record["target_ids"] = list(target_ids)
    record["source_ids"] = list(source_ids)

    def finish_method(name: str, adv_img: Image | None, adv_v, params) -> None:
        max_k = min(max(cfg.k_list), len(corpus))
        adv_result = topk(adv_v, corpus, max_k)
        flags = {}
        for k in cfg.k_list:
            k_eff = min(k, len(corpus))
            flags[f"T@{k}"] = metric_top_changed(clean_result, adv_result, k_eff)
            flags[f"W@{k}"] = metric_weather_at_k(adv_result, k_eff, corpus)
        stats = mechanism_stats(clean_v, adv_v, corpus, target_ids, source_ids)
        methods[name] = {
            "params": params.to_dict() if params else None,
            "embedding": [float(x) for x in adv_v],
            "topk": [[i, s] for i, s in adv_result.ranked],
            "flags": flags,
            "mechanism": stats.to_dict(),
        }
        if image_dir is not None and adv_img is not None:
            qdir = os.path.join(image_dir, qid)
            os.makedirs(qdir, exist_ok=True)
            save_image(adv_img, os.path.join(qdir, f"{name}.png"))

    for name in cfg.methods:
        if name == "clean":
            finish_method("clean", img, clean_v, None)
        elif name == "gaussian_blur":
            adv = gaussian_blur(img, cfg.blur_sigma).quantize8()
            finish_method(name, adv, encoder.encode_image(adv), None)
        elif name == "brightness_haze":
            adv = brightness_haze_baseline(img, cfg.haze_strength).quantize8()
            finish_method(name, adv, encoder.encode_image(adv), None)
        elif name == "random_cloud":
            rng = SplitMix64(derive_seed(master, "random_cloud", qid))
            params = draw_uniform_params(cfg.bounds, rng)
            adv, _ = render(img, params)
            adv = adv.quantize8()
            finish_method(name, adv, encoder.encode_image(adv), params)
        elif name == "fixed_cloud":
            seed = derive_seed(master, "fixed_cloud", qid) % 10000
            params = AtmosParams(texture_seed=seed, **FIXED_BASELINE)
            adv, _ = render(img, params)
            adv = adv.quantize8()
            finish_method(name, adv, encoder.encode_image(adv), params)
        elif name == METHOD_OPTIMIZED:
            adv, _ = render(img, attack_rec.theta_star)
            adv = adv.quantize8()
            finish_method(name, adv, attack_rec.adv_embedding, attack_rec.theta_star)
            methods[name].update(
                {
                    "objective": attack_rec.objective,
                    "objective_trace": list(attack_rec.objective_trace),
                    "term_breakdown": attack_rec.term_breakdown,
                    "evaluation_count": attack_rec.evaluation_count,
                    "eval_failures": attack_rec.eval_failures,
                }
            )
        else:
            raise ValueError(f"unknown method {name!r}")

    record["methods"] = methods
    return record


# --- aggregation ------------------------------------------------------------


def aggregate_records(records: list[dict], k_list, methods) -> list[dict]:
    """One row per method; percentages are plain means of per-query flags."""
    rows = []
    ok = [r for r in records if not r.get("failed")]
    for name in methods:
        with_method = [r for r in ok if name in r.get("methods", {})]
        row: dict = {"method": name, "n_queries": len(with_method)}
        if not with_method:
            rows.append(row)
            continue
        for k in k_list:
            for metric in (f"T@{k}", f"W@{k}"):
                vals = [r["methods"][name]["flags"][metric] for r in with_method]
                row[metric] = 100.0 * sum(vals) / len(vals)
        mech = [r["methods"][name]["mechanism"] for r in with_method]
        row["mean_source_drop"] = float(np.mean([m["source_drop"] for m in mech]))
        row["mean_target_gain"] = float(np.mean([m["target_gain"] for m in mech]))
        row["mean_rank_improvement"] = float(
            np.mean([m["rank_improvement"] for m in mech])
        )
        for k in (1, 5, 20):
            row[f"enter_top{k}"] = 100.0 * float(
                np.mean([m[f"enter_top{k}"] for m in mech])
            )
        row["median_adv_rank"] = float(np.median([m["adv_best_rank"] for m in mech]))
        row["median_clean_rank"] = float(
            np.median([m["clean_best_rank"] for m in mech])
        )
        objectives = [
            r["methods"][name]["objective"]
            for r in with_method
            if "objective" in r["methods"][name]
        ]
        if name == METHOD_OPTIMIZED and objectives:
            row["mean_objective"] = float(np.mean(objectives))
        rows.append(row)
    return rows


def write_csv(path: str, rows: list[dict], base_columns=()) -> None:
    """Full-precision CSV so aggregates recompute exactly from records."""
    columns: list[str] = list(base_columns)
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(row.get(c)) for c in columns])


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_csv_rows(path: str) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _write_json(path: str, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


# --- attack command ---------------------------------------------------------


def cmd_attack(cfg: RunConfig, out_dir: str, encoder=None, log=print) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    records_dir = os.path.join(out_dir, "records")
    images_dir = os.path.join(out_dir, "images")
    os.makedirs(records_dir, exist_ok=True)
    os.makedirs(images_dir, exist_ok=True)

    started = time.time()
    encoder = encoder or make_encoder(cfg.encoder_spec)
    corpus = resolve_corpus(cfg, encoder)
    queries = load_queries(cfg)

    save_corpus(corpus, os.path.join(out_dir, "corpus.json"), sidecar=True)
    _write_json(
        os.path.join(out_dir, "config.json"),
        {
            "config": cfg.semantic_dict(),
            "config_hash": cfg.config_hash(),
            "encoder": {
                "kind": encoder.descriptor.kind,
                "dim": encoder.descriptor.dim,
                "identity": encoder.descriptor.identity,
            },
        },
    )

    timings: dict[str, float] = {}

    def run_one(item):
        qid, img = item
        t0 = time.time()
        try:
            rec = run_single_query(qid, img, cfg, corpus, encoder, image_dir=images_dir)
        except EncoderError as exc:
            rec = {
                "query_id": qid,
                "failed": True,
                "error": f"{type(exc).__name__}: {exc}",
            }
        return qid, rec, time.time() - t0

    workers = max(1, cfg.workers)
    if workers > 1 and encoder.descriptor.concurrency_safe:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_one, queries))
    else:
        results = [run_one(item) for item in queries]

    records = []
    for qid, rec, dt in sorted(results, key=lambda r: r[0]):
        records.append(rec)
        timings[qid] = dt
        _write_json(os.path.join(records_dir, f"{qid}.json"), rec)

    failed = [r for r in records if r.get("failed")]
    if failed:
        log(f"{len(failed)}/{len(records)} queries failed")
    if len(failed) == len(records):
        raise RuntimeError("all queries failed")

    rows = aggregate_records(records, cfg.k_list, cfg.methods)
    write_csv(os.path.join(out_dir, "aggregate.csv"), rows)

    if cfg.filter_weather_top5 and METHOD_OPTIMIZED in cfg.methods:
        strong = [
            r
            for r in records
            if not r.get("failed")
            and r["methods"][METHOD_OPTIMIZED]["flags"].get("W@5", False)
        ]
        write_csv(
            os.path.join(out_dir, "aggregate_weather_top5.csv"),
            aggregate_records(strong, cfg.k_list, cfg.methods),
        )

    report = {
        "config_hash": cfg.config_hash(),
        "encoder_identity": encoder.descriptor.identity,
        "n_queries": len(records),
        "n_failed": len(failed),
        "aggregate": rows,
    }
    _write_json(os.path.join(out_dir, "report.json"), report)
    _write_json(
        os.path.join(out_dir, "timings.json"),
        {"total_seconds": time.time() - started, "per_query": timings},
    )
    log(
        f"attack complete: {len(records) - len(failed)}/{len(records)} queries, "
        f"reports in {out_dir}"
    )
    return report


# --- derived reports --------------------------------------------------------


def _load_run(out_dir: str) -> tuple[dict, list[dict], EvidenceCorpus]:
    with open(os.path.join(out_dir, "config.json"), encoding="utf-8") as fh:
        config_blob = json.load(fh)
    records_dir = os.path.join(out_dir, "records")
    records = []
    for name in sorted(os.listdir(records_dir)):
        if name.endswith(".json"):
            with open(os.path.join(records_dir, name), encoding="utf-8") as fh:
                records.append(json.load(fh))
    corpus = load_corpus(os.path.join(out_dir, "corpus.json"))
    return config_blob, records, corpus


def _record_methods(records: list[dict]) -> list[str]:
    seen: list[str] = []
    for rec in records:
        for name in rec.get("methods", {}):
            if name not in seen:
                seen.append(name)
    return seen


def cmd_robustness(
    out_dir: str, transforms, encoder=None, log=print
) -> list[dict]:
    """Re-encode stored adversarial PNGs under each transform, recompute metrics."""
    config_blob, records, corpus = _load_run(out_dir)
    cfg_d = config_blob["config"]
    k_list = tuple(cfg_d["k_list"])
    encoder = encoder or make_encoder(cfg_d["encoder_spec"])
    methods = _record_methods(records)
    rows = []
    for spec in transforms:
        name, fn = parse_transform(spec)
        transformed_records = []
        for rec in records:
            if rec.get("failed"):
                continue
            new_rec = {
                "query_id": rec["query_id"],
                "failed": False,
                "methods": {},
            }
            clean_result = RetrievalResult(
                ranked=tuple((i, float(s)) for i, s in rec["clean"]["topk"])
            )
            clean_v = np.array(rec["clean"]["embedding"])
            for method in methods:
                if method not in rec["methods"]:
                    continue
                img_path = os.path.join(out_dir, "images", rec["query_id"], f"{method}.png")
                adv = fn(load_image(img_path))
                adv_v = encoder.encode_image(adv)
                max_k = min(max(k_list), len(corpus))
                adv_result = topk(adv_v, corpus, max_k)
                flags = {}
                for k in k_list:
                    k_eff = min(k, len(corpus))
                    flags[f"T@{k}"] = metric_top_changed(clean_result, adv_result, k_eff)
                    flags[f"W@{k}"] = metric_weather_at_k(adv_result, k_eff, corpus)
                stats = mechanism_stats(
                    clean_v, adv_v, corpus, rec["target_ids"], rec["source_ids"]
                )
                new_rec["methods"][method] = {
                    "flags": flags,
                    "mechanism": stats.to_dict(),
                }
            transformed_records.append(new_rec)
        for row in aggregate_records(transformed_records, k_list, methods):
            rows.append({"transform": name, **row})
        log(f"robustness transform {name} done")
    write_csv(
        os.path.join(out_dir, "robustness.csv"),
        rows,
        base_columns=("transform", "method", "n_queries"),
    )
    return rows


def cmd_scaling(
    out_dir: str,
    sizes,
    k_list=None,
    subsample_seed: int = 1,
    log=print,
) -> list[dict]:
    """Recompute metrics at several corpus scales from stored embeddings only."""
    config_blob, records, corpus = _load_run(out_dir)
    k_list = tuple(k_list or config_blob["config"]["k_list"])
    methods = _record_methods(records)
    rows = []
    for size_spec in sizes:
        size = len(corpus) if size_spec in ("full", None) else int(size_spec)
        sub = subsample_corpus(corpus, size, subsample_seed)
        scaled_records = []
        for rec in records:
            if rec.get("failed"):
                continue
            clean_v = np.array(rec["clean"]["embedding"])
            max_k = min(max(k_list), len(sub))
            clean_result = topk(clean_v, sub, max_k)
            new_rec = {"query_id": rec["query_id"], "failed": False, "methods": {}}
            present = frozenset(e.id for e in sub.entries)
            target_ids = [i for i in rec["target_ids"] if i in present]
            source_ids = [i for i in rec["source_ids"] if i in present]
            for method in methods:
                if method not in rec["methods"]:
                    continue
                adv_v = np.array(rec["methods"][method]["embedding"])
                adv_result = topk(adv_v, sub, max_k)
                flags = {}
                for k in k_list:
                    k_eff = min(k, len(sub))
                    flags[f"T@{k}"] = metric_top_changed(clean_result, adv_result, k_eff)
                    flags[f"W@{k}"] = metric_weather_at_k(adv_result, k_eff, sub)
                payload = {"flags": flags}
                if target_ids and source_ids:
                    payload["mechanism"] = mechanism_stats(
                        clean_v, adv_v, sub, target_ids, source_ids
                    ).to_dict()
                new_rec["methods"][method] = payload
            scaled_records.append(new_rec)
        have_mech = all(
            "mechanism" in r["methods"][m]
            for r in scaled_records
            for m in r["methods"]
        )
        agg_rows = (
            aggregate_records(scaled_records, k_list, methods)
            if have_mech
            else _flags_only_rows(scaled_records, k_list, methods)
        )
        for row in agg_rows:
            rows.append({"corpus_size": size, **row})
        log(f"scaling size {size} done")
    write_csv(os.path.join(out_dir, "scaling.csv"), rows)
    return rows


def _flags_only_rows(records, k_list, methods) -> list[dict]:
    rows = []
    for name in methods:
        with_method = [r for r in records if name in r["methods"]]
        row = {"method": name, "n_queries": len(with_method)}
        if with_method:
            for k in k_list:
                for metric in (f"T@{k}", f"W@{k}"):
                    vals = [r["methods"][name]["flags"][metric] for r in with_method]
                    row[metric] = 100.0 * sum(vals) / len(vals)
        rows.append(row)
    return rows


def cmd_transfer(
    out_dir: str,
    encoder2_spec: str,
    corpus2_path: str | None = None,
    log=print,
) -> list[dict]:
    """Re-score stored adversarial images under a different encoder."""
    config_blob, records, corpus = _load_run(out_dir)
    k_list = tuple(config_blob["config"]["k_list"])
    encoder2 = make_encoder(encoder2_spec)
    if corpus2_path is not None:
        corpus2 = load_corpus(corpus2_path)
        if corpus2.dim != encoder2.descriptor.dim:
            raise DimMismatch(expected=corpus2.dim, got=encoder2.descriptor.dim)
    else:
        corpus2 = EvidenceCorpus(
            [
                EvidenceEntry(
                    id=e.id,
                    text=e.text,
                    category=e.category,
                    embedding=encoder2.encode_text(e.text),
                )
                for e in corpus.entries
            ]
        )
    methods = _record_methods(records)
    new_records = []
    for rec in records:
        if rec.get("failed"):
            continue
        clean_img = load_image(
            os.path.join(out_dir, "images", rec["query_id"], "clean.png")
        )
        clean_v = encoder2.encode_image(clean_img)
        max_k = min(max(k_list), len(corpus2))
        clean_result = topk(clean_v, corpus2, max_k)
        new_rec = {"query_id": rec["query_id"], "failed": False, "methods": {}}
        for method in methods:
            if method not in rec["methods"]:
                continue
            img_path = os.path.join(out_dir, "images", rec["query_id"], f"{method}.png")
            adv_v = encoder2.encode_image(load_image(img_path))
            adv_result = topk(adv_v, corpus2, max_k)
            flags = {}
            for k in k_list:
                k_eff = min(k, len(corpus2))
                flags[f"T@{k}"] = metric_top_changed(clean_result, adv_result, k_eff)
                flags[f"W@{k}"] = metric_weather_at_k(adv_result, k_eff, corpus2)
            stats = mechanism_stats(
                clean_v, adv_v, corpus2, rec["target_ids"], rec["source_ids"]
            )
            new_rec["methods"][method] = {
                "flags": flags,
                "mechanism": stats.to_dict(),
            }
        new_records.append(new_rec)
    rows = [
        {"encoder": encoder2.descriptor.identity, **row}
        for row in aggregate_records(new_records, k_list, methods)
    ]
    write_csv(os.path.join(out_dir, "transfer.csv"), rows)
    log(f"transfer to {encoder2.descriptor.identity} done")
    return rows


def apply_ablation(cfg: RunConfig, switch: str) -> RunConfig:
    obj = cfg.objective
    bounds = cfg.bounds
    if switch == "full":
        pass
    elif switch == "no-ltar":
        obj = replace(obj, weight_target=0.0)
    elif switch == "no-lsrc":
        obj = replace(obj, weight_source=0.0)
    elif switch == "no-lrank":
        obj = replace(obj, weight_rank=0.0)
    elif switch == "no-lnat":
        obj = replace(obj, weight_naturalness=0.0)
    elif switch == "no-larea":
        obj = replace(obj, weight_area=0.0)
    elif switch == "low-opacity":
        lo = bounds.opacity[0]
        bounds = replace(bounds, opacity=(lo, lo))
    elif switch == "low-severity":
        lo = bounds.severity[0]
        bounds = replace(bounds, severity=(lo, lo))
    elif switch == "no-haze":
        bounds = replace(bounds, haze=(0.0, 0.0))
    elif switch == "no-softness":
        bounds = replace(bounds, edge_softness=(0.0, 0.0))
    else:
        raise ValueError(f"unknown ablation switch {switch!r}")
    return replace(cfg, objective=obj, bounds=bounds, methods=(METHOD_OPTIMIZED,))


def cmd_ablate(cfg: RunConfig, switches, out_dir: str, encoder=None, log=print) -> list[dict]:
    """Re-run the optimized attack under each variant; one aggregate row each."""
    if not switches:
        raise ValueError("no ablation switches given")
    os.makedirs(out_dir, exist_ok=True)
    rows = []
    for switch in switches:
        variant_cfg = apply_ablation(cfg, switch)
        variant_dir = os.path.join(out_dir, f"variant_{switch}")
        report = cmd_attack(variant_cfg, variant_dir, encoder=encoder, log=log)
        for row in report["aggregate"]:
            if row["method"] == METHOD_OPTIMIZED:
                rows.append({"variant": switch, **row})
    write_csv(os.path.join(out_dir, "ablation.csv"), rows)
    return rows


def cmd_defense(
    out_dir: str,
    encoder=None,
    transforms=("blur:1", "jpeg:50"),
    k: int = 5,
    defense_cfg: DefenseConfig | None = None,
    log=print,
) -> list[dict]:
    """Per-query defense columns over the stored attack artifacts."""
    config_blob, records, corpus = _load_run(out_dir)
    encoder = encoder or make_encoder(config_blob["config"]["encoder_spec"])
    defense_cfg = defense_cfg or DefenseConfig()
    parsed = [parse_transform(s) for s in transforms]
    methods = [m for m in _record_methods(records) if m != "clean"]
    rows = []
    for rec in records:
        if rec.get("failed"):
            continue
        qid = rec["query_id"]
        clean_img = load_image(os.path.join(out_dir, "images", qid, "clean.png"))
        risk_clean = atmospheric_risk_score(clean_img, defense_cfg)
        for method in methods:
            if method not in rec["methods"]:
                continue
            adv_img = load_image(os.path.join(out_dir, "images", qid, f"{method}.png"))
            instab = instability_score(
                adv_img, [fn for _, fn in parsed], corpus, k, encoder
            )
            adv_v = np.array(rec["methods"][method]["embedding"])
            k_eff = min(k, len(corpus))
            base_result = topk(adv_v, corpus, k_eff)
            reranked = rerank_result(
                base_result,
                corpus,
                defense_cfg.rerank_scene_weight,
                defense_cfg.rerank_weather_weight,
            )
            rows.append(
                {
                    "query_id": qid,
                    "method": method,
                    "risk_clean": risk_clean,
                    "risk_adv": atmospheric_risk_score(adv_img, defense_cfg),
                    "instability": instab,
                    "weather_top5_before": metric_weather_at_k(
                        base_result, k_eff, corpus
                    ),
                    "weather_top5_after": metric_weather_at_k(
                        reranked, k_eff, corpus
                    ),
                }
            )
    write_csv(os.path.join(out_dir, "defense.csv"), rows)
    log(f"defense report over {len(rows)} rows done")
    return rows


def cmd_verify(out_dir: str, log=print) -> list[str]:
    """Recompute aggregates and the config hash; report any drift."""
    config_blob, records, _ = _load_run(out_dir)
    cfg_d = config_blob["config"]
    problems = []
    blob = json.dumps(cfg_d, sort_keys=True).encode("utf-8")
    if hashlib.sha256(blob).hexdigest()[:16] != config_blob["config_hash"]:
        problems.append("config hash does not match the stored config")
    methods = cfg_d["methods"]
    expected = aggregate_records(records, tuple(cfg_d["k_list"]), methods)
    actual = read_csv_rows(os.path.join(out_dir, "aggregate.csv"))
    if len(expected) != len(actual):
        problems.append(f"row count {len(actual)} != expected {len(expected)}")
    for exp, act in zip(expected, actual):
        for key, val in exp.items():
            got = act.get(key, "")
            if isinstance(val, float):
                if got == "" or abs(float(got) - val) > 1e-9:
                    problems.append(f"{exp['method']}/{key}: {got!r} != {val!r}")
            elif str(val) != got:
                problems.append(f"{exp['method']}/{key}: {got!r} != {val!r}")
    if records and not problems:
        log(f"verify OK: {len(records)} records, {len(actual)} aggregate rows")
    for p in problems:
        log(f"verify MISMATCH: {p}")
    return problems


def cmd_corpus_build(
    texts_path: str,
    out_path: str,
    encoder,
    sidecar: bool = False,
    category_overrides: dict[str, str] | None = None,
    log=print,
) -> EvidenceCorpus:
    """Encode a text file (plain lines or JSONL) into a corpus file.

    Per-entry encoder failures are recorded and skipped; more than 10%
    failures aborts the build.
    """
    overrides = category_overrides or {}
    rows: list[tuple[str, str, str | None]] = []
    with open(texts_path, encoding="utf-8") as fh:
        for i, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            if line.startswith("{"):
                obj = json.loads(line)
                rows.append(
                    (obj.get("id", f"t{i:05d}"), obj["text"], obj.get("category"))
                )
            else:
                rows.append((f"t{i:05d}", line, None))
    entries = []
    failures = []
    for entry_id, text, category in rows:
        try:
            emb = encoder.encode_text(text)
        except EncoderError as exc:
            failures.append((entry_id, str(exc)))
            continue
        cat = lexicon.tag_category(text, override=overrides.get(entry_id, category))
        entries.append(
            EvidenceEntry(id=entry_id, text=text, category=cat, embedding=emb)
        )
    if failures and len(failures) > 0.10 * len(rows):
        raise RuntimeError(
            f"{len(failures)}/{len(rows)} texts failed to encode; aborting"
        )
    for entry_id, err in failures:
        log(f"skipped {entry_id}: {err}")
    corpus = EvidenceCorpus(entries)
    save_corpus(corpus, out_path, sidecar=sidecar)
    log(f"wrote {len(corpus)} entries to {out_path}")
    return corpus
