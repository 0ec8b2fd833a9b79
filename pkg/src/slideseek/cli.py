"""Command-line interface.

Subcommands: mosaic, index, search, eval, synth, stats. Machine-readable
output is JSON lines on stdout; human-readable tables appear only with
--verbose. Exit codes: 0 success, 1 usage error, 2 data or format error,
3 partial batch failure (some slides failed, the rest were processed).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .embedder import EmbeddingStore, builtin_embed, load_embeddings, write_embeddings
from .errors import SlideSeekError
from .evaluation import reference_aggregates, run_evaluation, topk_key
from .mosaic import (
    ImageRaster,
    TileDirectoryRaster,
    build_mosaic,
    write_mosaic_csv,
)
from .records import (
    DatasetManifest,
    EvalConfig,
    MosaicConfig,
    load_manifest,
    write_manifest,
)
from .search import build_index, majority_label, search
from .persistence import read_index, write_index
from .synth import CohortSpec, generate_cohort

log = logging.getLogger("slideseek")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_mosaic_flags(p):
    p.add_argument("--patch-size", type=int, default=224)
    p.add_argument("--k-color", type=int, default=9)
    p.add_argument("--fraction", type=float, default=0.02, help="tissue share to select")
    p.add_argument("--white-threshold", type=int, default=200)
    p.add_argument("--background-fraction", type=float, default=0.9)
    p.add_argument("--kmeans-max-iter", type=int, default=100)


def _add_eval_flags(p):
    p.add_argument("--top-ks", default="1,3,5", help="comma-separated voting depths")
    p.add_argument("--exclude-same-patient", action="store_true")
    p.add_argument(
        "--within-organ",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="restrict candidates to the query's organ",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slideseek", description=__doc__.splitlines()[0])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1)
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mosaic", help="select mosaic patches for every manifest slide")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="directory for per-slide mosaic CSVs")
    _add_mosaic_flags(p)
    p.set_defaults(func=cmd_mosaic)

    p = sub.add_parser("index", help="build and write a slide index")
    p.add_argument("--manifest", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--embeddings-dir", help="directory of <wsi_id>.yxeb files")
    src.add_argument(
        "--builtin-embed",
        action="store_true",
        help="embed mosaic patches with the built-in color encoder",
    )
    p.add_argument("--dim", type=int, default=64, help="built-in embedding dimension")
    p.add_argument("--out", required=True, help="index file path")
    _add_mosaic_flags(p)
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("search", help="query one indexed slide against the rest")
    p.add_argument("--index", required=True)
    p.add_argument("--query-wsi", required=True)
    p.add_argument("--k", type=int, default=5)
    p.add_argument("--exclude-same-patient", action="store_true")
    p.add_argument(
        "--within-organ", action=argparse.BooleanOptionalAction, default=True
    )
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("eval", help="leave-one-out evaluation over an index")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--index")
    src.add_argument("--manifest")
    p.add_argument("--embeddings-dir", help="required with --manifest")
    p.add_argument("--report", help="write the JSON report here (default stdout)")
    p.add_argument("--csv", help="also write a per-organ CSV table")
    _add_eval_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic cohort")
    p.add_argument("--spec", required=True, help="cohort spec JSON")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="aggregate per-organ reference scores")
    p.add_argument("--fixture", help="organ,model,topk,f1 CSV (default: shipped fixture)")
    p.set_defaults(func=cmd_stats)
    return parser


def _open_raster(path_text: str):
    if not path_text:
        raise SlideSeekError("record has no raster path")
    path = Path(path_text)
    if path.is_dir():
        return TileDirectoryRaster(path)
    if path.is_file():
        return ImageRaster(path)
    raise SlideSeekError(f"raster path {path} does not exist")


def _mosaic_config(args) -> MosaicConfig:
    return MosaicConfig(
        k_color=args.k_color,
        select_fraction=args.fraction,
        patch_size=args.patch_size,
        background_white_threshold=args.white_threshold,
        background_max_fraction=args.background_fraction,
        kmeans_max_iter=args.kmeans_max_iter,
        seed=args.seed,
    )


def _eval_config(args) -> EvalConfig:
    try:
        ks = tuple(int(k) for k in args.top_ks.split(","))
        return EvalConfig(
            top_ks=ks,
            exclude_same_patient=args.exclude_same_patient,
            within_organ=args.within_organ,
        )
    except ValueError as exc:
        raise UsageError(f"bad --top-ks {args.top_ks!r}: {exc}") from exc


def _load_manifest(path) -> DatasetManifest:
    manifest = load_manifest(path)
    if len(manifest) == 0:
        raise UsageError(f"manifest {path} has no slides")
    return manifest


def _for_each_slide(records, threads, work):
    """Run work(record) per slide, reporting failures; returns (ok, failures)."""
    results = []
    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        futures = [(r, pool.submit(work, r)) for r in records]
        for record, future in futures:
            try:
                results.append((record, future.result()))
            except (SlideSeekError, OSError, ValueError) as exc:
                print(f"slide {record.wsi_id}: {exc}", file=sys.stderr)
    failures = len(records) - len(results)
    return results, failures


def cmd_mosaic(args) -> int:
    manifest = _load_manifest(args.manifest)
    cfg = _mosaic_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def work(record):
        raster = _open_raster(record.source_path)
        mosaic = build_mosaic(raster, cfg, record.wsi_id)
        target = out_dir / f"{record.wsi_id}.csv"
        write_mosaic_csv(mosaic, target)
        log.info("%s: %d patches", record.wsi_id, len(mosaic))
        return target

    _, failures = _for_each_slide(manifest, args.threads, work)
    return 3 if failures else 0


def _store_from_embeddings_dir(manifest, directory, threads):
    directory = Path(directory)
    if not directory.is_dir():
        raise SlideSeekError(f"embeddings directory {directory} does not exist")

    def work(record):
        return load_embeddings(directory / f"{record.wsi_id}.yxeb", record.wsi_id)

    results, failures = _for_each_slide(manifest, threads, work)
    if not results:
        raise SlideSeekError("no slide embeddings could be loaded")
    store = EmbeddingStore(results[0][1].dim)
    for _, slide_store in results:
        store.merge(slide_store)
    kept = [record for record, _ in results]
    return store, kept, failures


def _store_from_builtin(manifest, args):
    cfg = _mosaic_config(args)
    store = EmbeddingStore(args.dim)

    def work(record):
        raster = _open_raster(record.source_path)
        mosaic = build_mosaic(raster, cfg, record.wsi_id)
        out = []
        for coord in mosaic.patches:
            block = raster.read_region(coord.x, coord.y, coord.width, coord.height)
            out.append((coord, builtin_embed(block, args.dim, args.seed)))
        return out

    results, failures = _for_each_slide(manifest, args.threads, work)
    if not results:
        raise SlideSeekError("no slides could be embedded")
    for record, items in results:
        for coord, emb in items:
            store.add(record.wsi_id, coord, emb.vector)
    kept = [record for record, _ in results]
    return store, kept, failures


def cmd_index(args) -> int:
    manifest = _load_manifest(args.manifest)
    if args.embeddings_dir:
        store, kept, failures = _store_from_embeddings_dir(
            manifest, args.embeddings_dir, args.threads
        )
    else:
        store, kept, failures = _store_from_builtin(manifest, args)
    index = build_index(kept, store)
    write_index(index, args.out)
    log.info("indexed %d slides (nbits=%d) to %s", len(index), index.nbits, args.out)
    return 3 if failures else 0


def cmd_search(args) -> int:
    index = read_index(args.index)
    record, bunch = index.get(args.query_wsi)
    cfg = EvalConfig(
        exclude_same_patient=args.exclude_same_patient, within_organ=args.within_organ
    )
    result = search(index, bunch, record, args.k, cfg)
    for rank, (wsi_id, distance, diagnosis) in enumerate(result.ranked, start=1):
        print(
            json.dumps(
                {
                    "rank": rank,
                    "wsi_id": wsi_id,
                    "distance": distance,
                    "primary_diagnosis": diagnosis,
                }
            )
        )
    if args.verbose:
        vote = majority_label(result, args.k)
        print(f"majority@{args.k}: {vote}", file=sys.stderr)
    return 0


def cmd_eval(args) -> int:
    cfg = _eval_config(args)
    if args.index:
        index = read_index(args.index)
    else:
        if not args.embeddings_dir:
            raise UsageError("--manifest requires --embeddings-dir")
        manifest = _load_manifest(args.manifest)
        store, kept, failures = _store_from_embeddings_dir(
            manifest, args.embeddings_dir, args.threads
        )
        if failures:
            raise SlideSeekError(f"{failures} slides failed to load")
        index = build_index(kept, store)
    report = run_evaluation(index, cfg)
    doc = report.to_json()
    if args.report:
        Path(args.report).write_text(doc)
    else:
        sys.stdout.write(doc)
    if args.csv:
        Path(args.csv).write_text(report.to_csv(cfg.top_ks))
    return 0


def cmd_synth(args) -> int:
    spec = CohortSpec.from_json(args.spec)
    manifest, store = generate_cohort(spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(manifest, out_dir / "manifest.csv")
    for wsi_id in store.wsi_ids():
        write_embeddings(store, wsi_id, out_dir / f"{wsi_id}.yxeb")
    log.info("wrote %d slides to %s", len(manifest), out_dir)
    return 0


def cmd_stats(args) -> int:
    aggregates = reference_aggregates(args.fixture)
    for (model, k), stats in aggregates.items():
        print(
            json.dumps(
                {
                    "model": model,
                    "topk": k,
                    "mean": stats["mean"] * 100.0,
                    "std": stats["std"] * 100.0,
                    "ci_low": stats["ci_low"] * 100.0,
                    "ci_high": stats["ci_high"] * 100.0,
                    "n_organs": stats["n_organs"],
                }
            )
        )
        if args.verbose:
            print(
                f"{model} {topk_key(k)}: {round(stats['mean'] * 100)}% "
                f"+- {round(stats['std'] * 100)}% "
                f"[{round(stats['ci_low'] * 100)}% {round(stats['ci_high'] * 100)}%] "
                f"(n={stats['n_organs']})",
                file=sys.stderr,
            )
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (SlideSeekError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
