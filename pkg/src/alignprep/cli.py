"""Command-line interface: standalone stage commands plus the full pipeline."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline, segment
from .bench import BenchmarkError, run_scaling_bench
from .corpus import (
    SamplingSpec,
    stable_hash,
    sampling_weights,
    two_stage_weights,
)
from .pipeline import PipelineConfig, StageError

logger = logging.getLogger("alignprep")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alignprep",
        description="Forced alignment and speech-corpus preparation",
    )
    parser.add_argument("--config", help="pipeline config file (JSON)")
    parser.add_argument("--jobs", type=int, default=None, help="parallel workers")
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("normalize", help="normalize, starify and romanize transcripts")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--romanize", default="builtin", help="builtin or table:<path>")
    p.add_argument("--strip-brackets", action="store_true")
    p.add_argument("--bracket-threshold", type=float, default=0.03)

    p = sub.add_parser("align", help="force-align chapters to their transcripts")
    p.add_argument("--normalized", required=True)
    p.add_argument("--token-table", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--buffer-rows", type=int, default=100)
    p.add_argument("--level", default="verse", choices=("word", "verse"))
    p.add_argument("--base-dir", default=None, help="base for relative emission paths")

    p = sub.add_parser("score", help="build scored per-sample records")
    p.add_argument("--normalized", required=True)
    p.add_argument("--alignment", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("filter", help="apply recording/CER/score filters")
    p.add_argument("--samples", required=True)
    p.add_argument("--normalized", required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--score-threshold", type=float, default=-0.2)
    p.add_argument("--cer-threshold", type=float, default=0.10)
    p.add_argument("--recording-threshold", type=float, default=0.05)

    p = sub.add_parser("split", help="assign train/dev/test splits")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mode", default="book", choices=pipeline.SPLIT_MODES)
    p.add_argument("--dev-book", default="MRK")
    p.add_argument("--test-book", default="JHN")
    p.add_argument("--min-train-s", type=float, default=300.0)

    p = sub.add_parser("segment", help="join and cut unlabeled speech segments")
    p.add_argument("--segments", required=True, help="ldJSON {start_s,end_s,class}")
    p.add_argument("--out", required=True)
    p.add_argument("--join-fraction", type=float, default=0.20)
    p.add_argument("--min-s", type=float, default=5.5)
    p.add_argument("--max-s", type=float, default=30.0)

    p = sub.add_parser("sample-weights", help="multilingual sampling weights")
    p.add_argument("--durations", required=True, help="JSON durations file")
    p.add_argument("--out", required=True)
    p.add_argument("--beta-l", type=float, default=0.5)
    p.add_argument("--beta-d", type=float, default=0.5)

    p = sub.add_parser("bench", help="streaming-vs-full scaling benchmark")
    p.add_argument("--frames", default="10000,20000,40000")
    p.add_argument("--labels", type=int, default=50)
    p.add_argument("--buffer-rows", type=int, default=100)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    p.add_argument("--csv", default=None)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config", dest="pipeline_config", default=None)

    return parser


def _cmd_segment(args, seed: int) -> int:
    rows = pipeline.read_jsonl(args.segments)
    by_recording: dict = {}
    for row in rows:
        rec_id = row.get("id", "rec")
        by_recording.setdefault(rec_id, []).append(row)
    out = []
    for rec_id in sorted(by_recording):
        group = by_recording[rec_id]
        labeled = [
            segment.LabeledSegment(
                start_s=row["start_s"], end_s=row["end_s"], label=row["class"]
            )
            for row in group
        ]
        intervals = segment.join_segments(labeled, max_gap_fraction=args.join_fraction)
        language = group[0].get("language", "und")
        n = 0
        for k, interval in enumerate(intervals):
            rng = np.random.default_rng([seed, stable_hash(rec_id), k])
            for start, end in segment._partition(interval, args.min_s, args.max_s, rng):
                out.append(
                    {
                        "id": f"{rec_id}_p{n:04d}",
                        "language": language,
                        "recording_id": rec_id,
                        "start_s": start,
                        "end_s": end,
                        "duration_s": end - start,
                    }
                )
                n += 1
    pipeline.write_jsonl(out, args.out)
    logger.info("segment: wrote %d samples", len(out))
    return 0


def _cmd_sample_weights(args) -> int:
    with open(args.durations, encoding="utf-8") as f:
        durations = json.load(f)
    if durations and all(isinstance(v, dict) for v in durations.values()):
        spec = SamplingSpec(
            durations=durations,
            beta_language=args.beta_l,
            beta_dataset=args.beta_d,
        )
        weights = two_stage_weights(spec)
    else:
        weights = sampling_weights(durations, args.beta_l)
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(weights, f, indent=2, sort_keys=True)
        f.write("\n")
    return 0


def _cmd_bench(args) -> int:
    frames = [int(x) for x in str(args.frames).split(",") if x]
    report = run_scaling_bench(
        frames,
        num_labels=args.labels,
        buffer_rows=args.buffer_rows,
        seed=args.seed if args.seed is not None else 0,
        repeats=args.repeats,
    )
    report.write_json(args.out)
    if args.csv:
        report.write_csv(args.csv)
    for case in report.cases:
        logger.info(
            "bench T=%d: streaming %.3fs (%d entries), full %.3fs (%d entries)",
            case.frames,
            case.streaming_seconds,
            case.streaming_peak_entries,
            case.full_seconds,
            case.full_peak_entries,
        )
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    seed = args.seed if args.seed is not None else 0
    try:
        if args.command == "normalize":
            pipeline.stage_normalize(
                args.manifest,
                args.out,
                romanize_scheme=args.romanize,
                strip_brackets=args.strip_brackets,
                bracket_threshold=args.bracket_threshold,
            )
        elif args.command == "align":
            pipeline.stage_align(
                args.normalized,
                args.out,
                args.token_table,
                buffer_rows=args.buffer_rows,
                level=args.level,
                jobs=args.jobs or 1,
                base_dir=args.base_dir,
            )
        elif args.command == "score":
            pipeline.stage_score(args.normalized, args.alignment, args.out)
        elif args.command == "filter":
            pipeline.stage_filter(
                args.samples,
                args.normalized,
                args.report,
                args.out,
                score_threshold=args.score_threshold,
                cer_threshold=args.cer_threshold,
                recording_threshold=args.recording_threshold,
            )
        elif args.command == "split":
            pipeline.stage_split(
                args.manifest,
                args.out,
                mode=args.mode,
                dev_book=args.dev_book,
                test_book=args.test_book,
                min_train_s=args.min_train_s,
                seed=seed,
            )
        elif args.command == "segment":
            return _cmd_segment(args, seed)
        elif args.command == "sample-weights":
            return _cmd_sample_weights(args)
        elif args.command == "bench":
            return _cmd_bench(args)
        elif args.command == "pipeline":
            config_path = args.pipeline_config or args.config
            if not config_path:
                logger.error("pipeline needs --config")
                return 2
            config = PipelineConfig.from_file(config_path)
            overrides = {}
            if args.jobs is not None:
                overrides["jobs"] = args.jobs
            if args.seed is not None:
                overrides["seed"] = args.seed
            if overrides:
                config = PipelineConfig.from_dict({**config.to_dict(), **overrides})
            summary = pipeline.run_pipeline(config)
            kept = summary["samples"]["kept"]
            total = summary["samples"]["total"]
            logger.info("pipeline done: kept %d of %d samples", kept, total)
    except (StageError, BenchmarkError) as exc:
        logger.error("%s", exc)
        return 1
    except (OSError, ValueError, KeyError) as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
