"""Command-line interface.

Subcommands: corpus-build, attack, robustness, scaling, transfer, ablate,
defense, verify. A JSON config file mirrors the RunConfig fields; CLI
flags override it.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .encoders import make_encoder
from .runner import (
    ABLATION_SWITCHES,
    DEFAULT_TRANSFORMS,
    RunConfig,
    cmd_ablate,
    cmd_attack,
    cmd_corpus_build,
    cmd_defense,
    cmd_robustness,
    cmd_scaling,
    cmd_transfer,
    cmd_verify,
)


def _base_config(args) -> RunConfig:
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            cfg = RunConfig.from_dict(json.load(fh))
    else:
        cfg = RunConfig()
    if args.encoder:
        cfg = replace(cfg, encoder_spec=args.encoder)
    if args.seed is not None:
        cfg = replace(cfg, de=replace(cfg.de, master_seed=args.seed))
    if args.workers is not None:
        cfg = replace(cfg, workers=args.workers)
    if getattr(args, "corpus", None):
        cfg = replace(cfg, corpus_path=args.corpus)
    if getattr(args, "queries", None):
        pairs = []
        for item in args.queries:
            qid, _, path = item.partition("=")
            if not path:
                raise SystemExit(f"--query expects id=path, got {item!r}")
            pairs.append((qid, path))
        cfg = replace(cfg, queries=tuple(pairs))
    if getattr(args, "group", None):
        cfg = replace(cfg, target_group=args.group)
    if getattr(args, "n_queries", None):
        cfg = replace(cfg, benchmark_queries=args.n_queries)
    if getattr(args, "filter_weather_top5", False):
        cfg = replace(cfg, filter_weather_top5=True)
    return cfg


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="atmos-hijack",
        description="Atmospheric retrieval-hijacking attack and evaluation harness",
    )
    parser.add_argument("--config", help="JSON config file mirroring RunConfig")
    parser.add_argument(
        "--encoder",
        help="encoder spec: toy | toy:<seed> | precomputed:<path> | remote[:url]",
    )
    parser.add_argument("--seed", type=int, help="master seed override")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--workers", type=int, help="parallel query workers")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus-build", help="encode a text file into a corpus")
    p.add_argument("texts", help="plain-text lines or JSONL with id/text/category")
    p.add_argument("--corpus-out", required=True)
    p.add_argument("--sidecar", action="store_true", help="write float32 sidecar")
    p.add_argument("--overrides", help="JSON file {entry_id: category}")

    p = sub.add_parser("attack", help="run the optimized attack plus baselines")
    p.add_argument("--corpus", help="corpus file path, or 'benchmark'")
    p.add_argument(
        "--query",
        dest="queries",
        action="append",
        help="query as id=path.png (repeatable); default: shipped benchmark",
    )
    p.add_argument("--group", help="target weather group")
    p.add_argument("--n-queries", type=int, help="benchmark query count")
    p.add_argument(
        "--filter-weather-top5",
        action="store_true",
        help="also aggregate over queries whose optimized top-5 gained weather evidence",
    )

    p = sub.add_parser("robustness", help="re-score attack outputs under transforms")
    p.add_argument("run_dir")
    p.add_argument(
        "--transforms",
        default=",".join(DEFAULT_TRANSFORMS),
        help="comma list, e.g. identity,jpeg:30,blur:1,resize:0.5",
    )

    p = sub.add_parser("scaling", help="recompute metrics at corpus subsample sizes")
    p.add_argument("run_dir")
    p.add_argument("--sizes", default="full", help="comma list of sizes or 'full'")
    p.add_argument("--k-list", help="comma list of retrieval depths")
    p.add_argument("--subsample-seed", type=int, default=1)

    p = sub.add_parser("transfer", help="re-score stored images under another encoder")
    p.add_argument("run_dir")
    p.add_argument("--encoder2", required=True)
    p.add_argument("--corpus2", help="pre-embedded corpus for the second encoder")

    p = sub.add_parser("ablate", help="re-run the attack under loss/component variants")
    p.add_argument("--corpus", help="corpus file path, or 'benchmark'")
    p.add_argument("--group", help="target weather group")
    p.add_argument("--n-queries", type=int)
    p.add_argument(
        "--switches",
        required=True,
        help=f"comma list from: {', '.join(ABLATION_SWITCHES)}",
    )

    p = sub.add_parser("defense", help="defense columns over attack outputs")
    p.add_argument("run_dir")
    p.add_argument("--transforms", default="blur:1,jpeg:50")
    p.add_argument("--k", type=int, default=5)

    p = sub.add_parser("verify", help="recompute aggregates from records")
    p.add_argument("run_dir")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)

    if args.command == "corpus-build":
        overrides = None
        if args.overrides:
            with open(args.overrides, encoding="utf-8") as fh:
                overrides = json.load(fh)
        encoder = make_encoder(args.encoder or "toy")
        cmd_corpus_build(
            args.texts,
            args.corpus_out,
            encoder,
            sidecar=args.sidecar,
            category_overrides=overrides,
        )
        return 0

    if args.command == "attack":
        cfg = _base_config(args)
        report = cmd_attack(cfg, args.out)
        return 0 if report["n_failed"] < report["n_queries"] else 1

    if args.command == "robustness":
        transforms = [t for t in args.transforms.split(",") if t]
        cmd_robustness(args.run_dir, transforms)
        return 0

    if args.command == "scaling":
        sizes = [s for s in args.sizes.split(",") if s]
        k_list = [int(k) for k in args.k_list.split(",")] if args.k_list else None
        cmd_scaling(args.run_dir, sizes, k_list=k_list, subsample_seed=args.subsample_seed)
        return 0

    if args.command == "transfer":
        cmd_transfer(args.run_dir, args.encoder2, corpus2_path=args.corpus2)
        return 0

    if args.command == "ablate":
        cfg = _base_config(args)
        switches = [s for s in args.switches.split(",") if s]
        cmd_ablate(cfg, switches, args.out)
        return 0

    if args.command == "defense":
        transforms = [t for t in args.transforms.split(",") if t]
        cmd_defense(args.run_dir, transforms=transforms, k=args.k)
        return 0

    if args.command == "verify":
        problems = cmd_verify(args.run_dir)
        return 0 if not problems else 1

    return 2


if __name__ == "__main__":
    sys.exit(main())
