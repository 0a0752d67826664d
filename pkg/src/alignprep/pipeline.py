"""End-to-end corpus pipeline: normalize, align, score, filter, split, report.

Every stage reads the previous stage's line-delimited JSON artifact and
writes its own, so any stage can be re-run in isolation and intermediate
state stays inspectable with standard text tools. Stage outputs are written
to a ``.partial`` file and renamed only on success. Given identical inputs,
configuration and seed, every artifact is byte-identical across runs.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import quality, textnorm
from .corpus import (
    ManifestRecord,
    fallback_split,
    read_manifest,
    split_by_book,
    split_random,
    write_manifest,
)
from .emissions import TokenTable, load_emissions, load_token_table
from .labels import STAR, LabelSequence
from .quality import (
    DEFAULT_RECORDING_CER_THRESHOLD,
    DEFAULT_SAMPLE_CER_THRESHOLD,
    DEFAULT_SCORE_THRESHOLD,
    alignment_score,
)
from .trellis import (
    DEFAULT_BUFFER_ROWS,
    build_state_chain,
    extract_spans,
    viterbi_streaming,
)

logger = logging.getLogger(__name__)

SPLIT_MODES = ("book", "fallback", "random")
LEVELS = ("word", "verse")


class StageError(RuntimeError):
    """A pipeline stage failed; carries the stage name and record id."""

    def __init__(self, stage: str, record_id: str | None, cause: str):
        self.stage = stage
        self.record_id = record_id
        at = f" on record {record_id!r}" if record_id else ""
        super().__init__(f"stage {stage!r} failed{at}: {cause}")


@dataclass(frozen=True)
class PipelineConfig:
    manifest: str
    token_table: str
    output_dir: str
    romanize: str = "builtin"  # "builtin" or "table:<path>"
    strip_brackets: bool = False
    bracket_threshold: float = textnorm.DEFAULT_BRACKET_THRESHOLD
    score_threshold: float = DEFAULT_SCORE_THRESHOLD
    cer_threshold: float = DEFAULT_SAMPLE_CER_THRESHOLD
    recording_threshold: float = DEFAULT_RECORDING_CER_THRESHOLD
    buffer_rows: int = DEFAULT_BUFFER_ROWS
    level: str = "verse"
    split_mode: str = "book"
    dev_book: str = "MRK"
    test_book: str = "JHN"
    fractions: tuple = (0.8, 0.1, 0.1)
    min_train_s: float = 300.0
    seed: int = 0
    jobs: int = 1

    def __post_init__(self):
        object.__setattr__(self, "fractions", tuple(self.fractions))
        for name in ("bracket_threshold", "cer_threshold", "recording_threshold"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.score_threshold > 0:
            raise ValueError("score_threshold must be <= 0")
        if self.buffer_rows < 1:
            raise ValueError("buffer_rows must be >= 1")
        if self.level not in LEVELS:
            raise ValueError(f"level must be one of {LEVELS}")
        if self.split_mode not in SPLIT_MODES:
            raise ValueError(f"split_mode must be one of {SPLIT_MODES}")
        if not self.romanize == "builtin" and not self.romanize.startswith("table:"):
            raise ValueError("romanize must be 'builtin' or 'table:<path>'")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        data["fractions"] = list(self.fractions)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))

    def to_file(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")

    def romanization_table(self) -> dict | None:
        if self.romanize == "builtin":
            return None
        return textnorm.load_romanization_table(self.romanize.split(":", 1)[1])


def read_jsonl(path) -> list:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def write_jsonl(rows, path) -> None:
    partial = f"{path}.partial"
    with open(partial, "w", encoding="utf-8") as f:
        for row in rows:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    os.replace(partial, path)


def stage_normalize(
    manifest_path,
    out_path,
    romanize_scheme: str = "builtin",
    strip_brackets: bool = False,
    bracket_threshold: float = textnorm.DEFAULT_BRACKET_THRESHOLD,
):
    """Normalize, starify and romanize every chapter's verses."""
    table = None
    if romanize_scheme != "builtin":
        if not romanize_scheme.startswith("table:"):
            raise StageError("normalize", None, f"bad scheme {romanize_scheme!r}")
        table = textnorm.load_romanization_table(romanize_scheme.split(":", 1)[1])
    out = []
    for rec in read_jsonl(manifest_path):
        rec_id = rec.get("id")
        try:
            verses = rec["verses"]
            rate = textnorm.bracket_rate(verses)
            flagged = rate >= bracket_threshold
            if flagged and strip_brackets:
                verses = [textnorm.strip_brackets(v) for v in verses]
            verses_norm = [textnorm.normalize(v) for v in verses]
            starred, star_map = textnorm.starify_verses(verses_norm)
            label_verses = [textnorm.romanize(v, table) for v in starred]
            row = dict(rec)
            row.update(
                verses_norm=verses_norm,
                starred_verses=starred,
                label_verses=label_verses,
                star_map={str(k): v for k, v in star_map.items()},
                bracket_rate=rate,
                bracket_flagged=flagged,
            )
            out.append(row)
        except StageError:
            raise
        except Exception as exc:
            raise StageError("normalize", rec_id, str(exc)) from exc
    write_jsonl(out, out_path)
    return out


def _align_one(payload):
    rec, tokens, buffer_rows, level, base_dir = payload
    table = TokenTable(tokens)
    emission_path = Path(rec["emission"])
    if not emission_path.is_absolute() and base_dir:
        emission_path = Path(base_dir) / emission_path
    emissions = load_emissions(emission_path)
    labels = LabelSequence.from_verses(rec["label_verses"], preamble=STAR)
    chain = build_state_chain(labels, table)
    path = viterbi_streaming(emissions, chain, buffer_rows=buffer_rows)
    spans = extract_spans(path, chain, emissions, level=level)
    star_map = {int(k): v for k, v in rec.get("star_map", {}).items()}
    spans = textnorm.destarify(spans, star_map)

    stride = emissions.stride_ms
    segments = []
    for seg in spans.segments:
        score = None
        if not seg.is_star:
            score = alignment_score(
                emissions, path, chain, (seg.start_frame, seg.end_frame)
            ).score
        segments.append(
            {
                "text": "" if seg.is_star else seg.text,
                "start_frame": seg.start_frame,
                "end_frame": seg.end_frame,
                "first_frame": seg.first_frame,
                "last_frame": seg.last_frame,
                "start_s": seg.start_frame * stride / 1000.0,
                "end_s": seg.end_frame * stride / 1000.0,
                "score": score,
                "star": seg.is_star,
                "verse": seg.verse,
                "word": seg.word,
            }
        )
    return {
        "id": rec["id"],
        "level": level,
        "stride_ms": stride,
        "frames": emissions.frames,
        "segments": segments,
    }


def stage_align(
    normalized_path,
    out_path,
    token_table_path,
    buffer_rows: int = DEFAULT_BUFFER_ROWS,
    level: str = "verse",
    jobs: int = 1,
    base_dir=None,
):
    """Force-align every chapter and emit its partitioning segments."""
    table = load_token_table(token_table_path)
    records = read_jsonl(normalized_path)
    payloads = [
        (rec, table.tokens, buffer_rows, level, str(base_dir) if base_dir else None)
        for rec in records
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            out = list(_collect("align", records, pool.map(_align_one, payloads)))
    else:
        out = []
        for rec, payload in zip(records, payloads):
            try:
                out.append(_align_one(payload))
            except Exception as exc:
                raise StageError("align", rec.get("id"), str(exc)) from exc
    write_jsonl(out, out_path)
    return out


def _collect(stage, records, results):
    it = iter(results)
    for rec in records:
        try:
            yield next(it)
        except StopIteration:
            return
        except Exception as exc:
            raise StageError(stage, rec.get("id"), str(exc)) from exc


def stage_score(normalized_path, alignment_path, out_path):
    """Assemble per-sample manifest records with confidence scores and CER."""
    chapters = {rec["id"]: rec for rec in read_jsonl(normalized_path)}
    samples = []
    for aligned in read_jsonl(alignment_path):
        chapter = chapters.get(aligned["id"])
        if chapter is None:
            raise StageError("score", aligned["id"], "no matching normalized record")
        stride = aligned["stride_ms"]
        hyps = chapter.get("hyp_verses")
        for k, seg in enumerate(aligned["segments"]):
            if seg["star"]:
                continue
            verse = seg.get("verse")
            raw_text = text = None
            if verse is not None and aligned["level"] == "verse":
                raw_text = chapter["verses"][verse]
                text = chapter["verses_norm"][verse]
            else:
                text = seg["text"]
            sample_cer = None
            if hyps is not None and verse is not None and text:
                sample_cer = quality.cer(text, hyps[verse])
            duration = (seg["end_frame"] - seg["start_frame"]) * stride / 1000.0
            record = ManifestRecord(
                id=f"{aligned['id']}_s{k:03d}",
                language=chapter.get("language", "und"),
                recording_id=chapter.get("recording_id", aligned["id"]),
                duration_s=duration,
                book=chapter.get("book"),
                chapter=chapter.get("chapter"),
                verse=verse,
                emission=chapter.get("emission"),
                raw_text=raw_text,
                text=text,
                score=seg["score"],
                cer=sample_cer,
                start_s=seg["start_s"],
                end_s=seg["end_s"],
            )
            samples.append(record)
    write_manifest(samples, out_path)
    return samples


def stage_filter(
    samples_path,
    normalized_path,
    report_path,
    kept_path,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    cer_threshold: float = DEFAULT_SAMPLE_CER_THRESHOLD,
    recording_threshold: float = DEFAULT_RECORDING_CER_THRESHOLD,
):
    """Apply recording, CER and confidence-score filters, in that order."""
    samples = read_manifest(samples_path)
    chapters = read_jsonl(normalized_path)

    recording_cers = {}
    for rec in chapters:
        dev_cer = rec.get("recording_dev_cer")
        if dev_cer is not None:
            recording_cers.setdefault(rec.get("recording_id"), float(dev_cer))
    recording_report = quality.filter_recordings(
        sorted(recording_cers.items()), threshold=recording_threshold
    )
    bad_recordings = {d.id for d in recording_report.dropped}

    rows = []
    kept = []
    for sample in samples:
        reason = None
        if sample.recording_id in bad_recordings:
            reason = (
                f"recording dev cer {recording_cers[sample.recording_id]:.6g} "
                f"vs threshold {recording_threshold:g}"
            )
        elif sample.cer is not None and sample.cer > cer_threshold:
            reason = f"cer {sample.cer:.6g} vs threshold {cer_threshold:g}"
        elif sample.score is not None and not sample.score > score_threshold:
            reason = f"score {sample.score:.6g} vs threshold {score_threshold:g}"
        rows.append(
            {
                "id": sample.id,
                "cer": sample.cer,
                "score": sample.score,
                "kept": reason is None,
                "reason": reason,
            }
        )
        if reason is None:
            kept.append(sample)
    write_jsonl(rows, report_path)
    write_manifest(kept, kept_path)
    return rows, kept


def stage_split(
    in_path,
    out_path,
    mode: str = "book",
    dev_book: str = "MRK",
    test_book: str = "JHN",
    fractions=(0.8, 0.1, 0.1),
    min_train_s: float = 300.0,
    seed: int = 0,
):
    """Assign train/dev/test splits to the filtered samples."""
    records = read_manifest(in_path)
    if mode == "book":
        records = split_by_book(records, dev_book=dev_book, test_book=test_book)
    elif mode == "fallback":
        records = fallback_split(records)
    elif mode == "random":
        records, dropped = split_random(
            records, fractions=fractions, min_train_s=min_train_s, seed=seed
        )
        if dropped:
            logger.info("dropped languages below the training floor: %s", dropped)
    else:
        raise StageError("split", None, f"unknown mode {mode!r}")
    write_manifest(records, out_path)
    return records


def stage_report(report_path, manifest_path, out_path):
    """Summarize kept/dropped counts and hours per split and language."""
    rows = read_jsonl(report_path)
    records = read_manifest(manifest_path)
    dropped: dict = {}
    for row in rows:
        if not row["kept"]:
            kind = row["reason"].split()[0]
            dropped[kind] = dropped.get(kind, 0) + 1
    splits: dict = {}
    languages: dict = {}
    for rec in records:
        s = splits.setdefault(rec.split, {"count": 0, "hours": 0.0})
        s["count"] += 1
        s["hours"] += rec.duration_s / 3600.0
        l = languages.setdefault(rec.language, {"count": 0, "hours": 0.0})
        l["count"] += 1
        l["hours"] += rec.duration_s / 3600.0
    summary = {
        "samples": {
            "total": len(rows),
            "kept": sum(1 for r in rows if r["kept"]),
            "dropped": dropped,
        },
        "splits": splits,
        "languages": languages,
    }
    partial = f"{out_path}.partial"
    with open(partial, "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    os.replace(partial, out_path)
    return summary


def run_pipeline(config: PipelineConfig) -> dict:
    """Run every stage in order, persisting each artifact along the way."""
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    base_dir = Path(config.manifest).parent

    normalized = out_dir / "normalized.jsonl"
    alignment = out_dir / "alignment.jsonl"
    samples = out_dir / "samples.jsonl"
    report = out_dir / "filter_report.jsonl"
    filtered = out_dir / "filtered.jsonl"
    manifest = out_dir / "manifest.jsonl"
    summary = out_dir / "summary.json"

    def guard(stage, fn):
        try:
            return fn()
        except StageError:
            raise
        except Exception as exc:
            raise StageError(stage, None, str(exc)) from exc

    guard(
        "normalize",
        lambda: stage_normalize(
            config.manifest,
            normalized,
            romanize_scheme=config.romanize,
            strip_brackets=config.strip_brackets,
            bracket_threshold=config.bracket_threshold,
        ),
    )
    guard(
        "align",
        lambda: stage_align(
            normalized,
            alignment,
            config.token_table,
            buffer_rows=config.buffer_rows,
            level=config.level,
            jobs=config.jobs,
            base_dir=base_dir,
        ),
    )
    guard("score", lambda: stage_score(normalized, alignment, samples))
    guard(
        "filter",
        lambda: stage_filter(
            samples,
            normalized,
            report,
            filtered,
            score_threshold=config.score_threshold,
            cer_threshold=config.cer_threshold,
            recording_threshold=config.recording_threshold,
        ),
    )
    guard(
        "split",
        lambda: stage_split(
            filtered,
            manifest,
            mode=config.split_mode,
            dev_book=config.dev_book,
            test_book=config.test_book,
            fractions=config.fractions,
            min_train_s=config.min_train_s,
            seed=config.seed,
        ),
    )
    return guard("report", lambda: stage_report(report, manifest, summary))
