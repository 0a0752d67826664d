import json
from pathlib import Path

import numpy as np
import pytest

from alignprep import PipelineConfig, read_manifest, run_pipeline
from alignprep.cli import main
from alignprep.pipeline import StageError, read_jsonl, stage_align

from mini_corpus import build_mini_corpus

ARTIFACTS = (
    "normalized.jsonl",
    "alignment.jsonl",
    "samples.jsonl",
    "filter_report.jsonl",
    "filtered.jsonl",
    "manifest.jsonl",
    "summary.json",
)


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    return build_mini_corpus(tmp_path_factory.mktemp("corpus"))


@pytest.fixture(scope="module")
def pipeline_run(corpus, tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("out")
    config = PipelineConfig(
        manifest=str(corpus["manifest"]),
        token_table=str(corpus["token_table"]),
        output_dir=str(out_dir),
        seed=11,
    )
    summary = run_pipeline(config)
    return {"config": config, "out_dir": out_dir, "summary": summary}


class TestConfig:
    def test_round_trip(self, tmp_path):
        config = PipelineConfig(
            manifest="m.jsonl",
            token_table="t.txt",
            output_dir="out",
            score_threshold=-0.3,
            fractions=(0.7, 0.2, 0.1),
        )
        path = tmp_path / "config.json"
        config.to_file(path)
        assert PipelineConfig.from_file(path) == config

    def test_threshold_ranges_validated(self):
        base = dict(manifest="m", token_table="t", output_dir="o")
        with pytest.raises(ValueError):
            PipelineConfig(**base, cer_threshold=1.5)
        with pytest.raises(ValueError):
            PipelineConfig(**base, score_threshold=0.5)
        with pytest.raises(ValueError):
            PipelineConfig(**base, split_mode="nope")
        with pytest.raises(ValueError):
            PipelineConfig(**base, romanize="uroman")

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config"):
            PipelineConfig.from_dict(
                {"manifest": "m", "token_table": "t", "output_dir": "o", "beam": 5}
            )


class TestPipelineEndToEnd:
    def test_every_artifact_written(self, pipeline_run):
        for name in ARTIFACTS:
            assert (pipeline_run["out_dir"] / name).exists()

    def test_noise_is_what_gets_dropped(self, corpus, pipeline_run):
        report = read_jsonl(pipeline_run["out_dir"] / "filter_report.jsonl")
        by_id = {row["id"]: row for row in report}
        aligned = read_jsonl(pipeline_run["out_dir"] / "alignment.jsonl")
        sample_ids = {}
        for chapter in aligned:
            k = 0
            for seg in chapter["segments"]:
                if seg["star"]:
                    continue
                sample_ids[(chapter["id"], seg["verse"])] = f"{chapter['id']}_s{k:03d}"
                k += 1

        expect_dropped = {}
        for chapter_id, verse in corpus["corrupted"]:
            expect_dropped[sample_ids[(chapter_id, verse)]] = "score"
        for chapter_id, verse in corpus["cer_garbled"]:
            expect_dropped[sample_ids[(chapter_id, verse)]] = "cer"

        for sample_id, row in by_id.items():
            if sample_id in expect_dropped:
                assert not row["kept"], sample_id
                assert row["reason"].startswith(expect_dropped[sample_id])
            else:
                assert row["kept"], (sample_id, row["reason"])

    def test_clean_verses_align_within_two_frames(self, corpus, pipeline_run):
        aligned = read_jsonl(pipeline_run["out_dir"] / "alignment.jsonl")
        checked = 0
        for chapter in aligned:
            truth = corpus["truth"][chapter["id"]]
            segments = [s for s in chapter["segments"] if not s["star"]]
            assert len(segments) == len(truth["verse_bounds"])
            for seg in segments:
                verse = seg["verse"]
                if verse == truth["corrupt_verse"]:
                    continue
                true_first, true_last = truth["verse_bounds"][verse]
                assert abs(seg["first_frame"] - true_first) <= 2, (chapter["id"], verse)
                assert abs(seg["last_frame"] - true_last) <= 2, (chapter["id"], verse)
                checked += 1
        assert checked >= 30

    def test_clean_scores_are_zero_and_corrupt_below_threshold(
        self, corpus, pipeline_run
    ):
        samples = read_manifest(pipeline_run["out_dir"] / "samples.jsonl")
        corrupt_keys = set(corpus["corrupted"])
        for sample in samples:
            chapter_id = sample.id.rsplit("_s", 1)[0]
            if (chapter_id, sample.verse) in corrupt_keys:
                assert sample.score < -0.2
            else:
                assert sample.score == 0.0

    def test_book_split_assignment(self, pipeline_run):
        records = read_manifest(pipeline_run["out_dir"] / "manifest.jsonl")
        assert records
        for rec in records:
            expected = {"MAT": "train", "MRK": "dev", "JHN": "test"}[rec.book]
            assert rec.split == expected

    def test_summary_consistent(self, pipeline_run):
        summary = pipeline_run["summary"]
        report = read_jsonl(pipeline_run["out_dir"] / "filter_report.jsonl")
        kept_records = read_manifest(pipeline_run["out_dir"] / "manifest.jsonl")
        assert summary["samples"]["total"] == len(report)
        assert summary["samples"]["kept"] == len(kept_records)
        dropped = summary["samples"]["dropped"]
        assert dropped.get("score", 0) == 4 and dropped.get("cer", 0) == 1
        hours = sum(split["hours"] for split in summary["splits"].values())
        assert hours == pytest.approx(
            sum(r.duration_s for r in kept_records) / 3600.0
        )

    def test_deterministic_across_runs(self, corpus, pipeline_run, tmp_path):
        config = PipelineConfig.from_dict(
            {**pipeline_run["config"].to_dict(), "output_dir": str(tmp_path / "again")}
        )
        run_pipeline(config)
        for name in ARTIFACTS:
            first = (pipeline_run["out_dir"] / name).read_bytes()
            second = (tmp_path / "again" / name).read_bytes()
            assert first == second, name

    def test_stage_rerun_matches_full_run(self, corpus, pipeline_run, tmp_path):
        redone = tmp_path / "alignment_redo.jsonl"
        stage_align(
            pipeline_run["out_dir"] / "normalized.jsonl",
            redone,
            corpus["token_table"],
            base_dir=Path(corpus["manifest"]).parent,
        )
        original = (pipeline_run["out_dir"] / "alignment.jsonl").read_bytes()
        assert redone.read_bytes() == original

    def test_parallel_align_matches_serial(self, corpus, pipeline_run, tmp_path):
        redone = tmp_path / "alignment_jobs2.jsonl"
        stage_align(
            pipeline_run["out_dir"] / "normalized.jsonl",
            redone,
            corpus["token_table"],
            jobs=2,
            base_dir=Path(corpus["manifest"]).parent,
        )
        original = (pipeline_run["out_dir"] / "alignment.jsonl").read_bytes()
        assert redone.read_bytes() == original


class TestPipelineErrors:
    def test_missing_emission_aborts_with_stage_and_record(self, corpus, tmp_path):
        rows = read_jsonl(corpus["manifest"])
        rows[1]["emission"] = "emissions/missing.ctce"
        bad_manifest = tmp_path / "bad.jsonl"
        with open(bad_manifest, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
        config = PipelineConfig(
            manifest=str(bad_manifest),
            token_table=str(corpus["token_table"]),
            output_dir=str(tmp_path / "out"),
        )
        with pytest.raises(StageError) as err:
            run_pipeline(config)
        assert err.value.stage == "align"
        assert err.value.record_id == rows[1]["id"]

    def test_unalignable_transcript_names_record(self, corpus, tmp_path):
        rows = read_jsonl(corpus["manifest"])
        # a transcript far longer than the audio cannot be traversed
        rows[0]["verses"] = ["word " * 2000]
        bad_manifest = tmp_path / "bad.jsonl"
        with open(bad_manifest, "w", encoding="utf-8") as f:
            for row in rows:
                f.write(json.dumps(row, sort_keys=True) + "\n")
        config = PipelineConfig(
            manifest=str(bad_manifest),
            token_table=str(corpus["token_table"]),
            output_dir=str(tmp_path / "out"),
        )
        with pytest.raises(StageError) as err:
            run_pipeline(config)
        assert err.value.record_id == rows[0]["id"]


class TestCommandLine:
    def test_stagewise_cli_matches_pipeline(self, corpus, pipeline_run, tmp_path):
        base = Path(corpus["manifest"]).parent
        out = tmp_path
        steps = [
            [
                "normalize",
                "--manifest", str(corpus["manifest"]),
                "--out", str(out / "normalized.jsonl"),
            ],
            [
                "align",
                "--normalized", str(out / "normalized.jsonl"),
                "--token-table", str(corpus["token_table"]),
                "--base-dir", str(base),
                "--out", str(out / "alignment.jsonl"),
            ],
            [
                "score",
                "--normalized", str(out / "normalized.jsonl"),
                "--alignment", str(out / "alignment.jsonl"),
                "--out", str(out / "samples.jsonl"),
            ],
            [
                "filter",
                "--samples", str(out / "samples.jsonl"),
                "--normalized", str(out / "normalized.jsonl"),
                "--report", str(out / "filter_report.jsonl"),
                "--out", str(out / "filtered.jsonl"),
            ],
            [
                "--seed", "11",
                "split",
                "--manifest", str(out / "filtered.jsonl"),
                "--out", str(out / "manifest.jsonl"),
                "--mode", "book",
            ],
        ]
        for argv in steps:
            assert main(argv) == 0
        for name in ARTIFACTS[:6]:
            assert (out / name).read_bytes() == (
                pipeline_run["out_dir"] / name
            ).read_bytes(), name

    def test_pipeline_subcommand(self, corpus, pipeline_run, tmp_path):
        config = PipelineConfig.from_dict(
            {
                **pipeline_run["config"].to_dict(),
                "output_dir": str(tmp_path / "cli_out"),
            }
        )
        config_path = tmp_path / "config.json"
        config.to_file(config_path)
        assert main(["pipeline", "--config", str(config_path)]) == 0
        for name in ARTIFACTS:
            assert (tmp_path / "cli_out" / name).read_bytes() == (
                pipeline_run["out_dir"] / name
            ).read_bytes()

    def test_pipeline_error_exit_code(self, corpus, tmp_path, capsys):
        config = PipelineConfig(
            manifest=str(tmp_path / "nope.jsonl"),
            token_table=str(corpus["token_table"]),
            output_dir=str(tmp_path / "out"),
        )
        config_path = tmp_path / "config.json"
        config.to_file(config_path)
        assert main(["pipeline", "--config", str(config_path)]) == 1

    def test_segment_subcommand(self, tmp_path):
        segments = tmp_path / "segments.jsonl"
        rows = [
            {"id": "recA", "start_s": 0.0, "end_s": 30.0, "class": "speech"},
            {"id": "recA", "start_s": 30.0, "end_s": 33.0, "class": "music"},
            {"id": "recA", "start_s": 33.0, "end_s": 64.0, "class": "speech"},
            {"id": "recA", "start_s": 64.0, "end_s": 80.0, "class": "noise"},
            {"id": "recA", "start_s": 80.0, "end_s": 84.0, "class": "speech"},
        ]
        with open(segments, "w") as f:
            for row in rows:
                f.write(json.dumps(row) + "\n")
        out = tmp_path / "samples.jsonl"
        assert main(["--seed", "3", "segment", "--segments", str(segments), "--out", str(out)]) == 0
        samples = read_jsonl(out)
        assert samples, "expected at least one sample"
        for row in samples:
            assert 5.5 - 1e-9 <= row["duration_s"] <= 30 + 1e-9
            assert row["recording_id"] == "recA"
        # the 3 s music gap joins (3/64 < 20%); the 16 s noise gap does not
        assert max(r["end_s"] for r in samples) <= 64.0

    def test_sample_weights_subcommand(self, tmp_path):
        durations = tmp_path / "durations.json"
        durations.write_text(json.dumps({"A": {"x": 4, "y": 1}, "B": {"z": 9}}))
        out = tmp_path / "weights.json"
        assert main(
            ["sample-weights", "--durations", str(durations), "--out", str(out),
             "--beta-l", "0.5", "--beta-d", "1.0"]
        ) == 0
        weights = json.loads(out.read_text())
        assert weights["B"]["z"] == pytest.approx(9 / 14)

        flat = tmp_path / "flat.json"
        flat.write_text(json.dumps({"x": 9, "y": 1}))
        assert main(
            ["sample-weights", "--durations", str(flat), "--out", str(out),
             "--beta-l", "0.5"]
        ) == 0
        weights = json.loads(out.read_text())
        assert weights == {"x": pytest.approx(0.75), "y": pytest.approx(0.25)}

    def test_bench_subcommand(self, tmp_path):
        out = tmp_path / "bench.json"
        csv_out = tmp_path / "bench.csv"
        assert main(
            ["bench", "--frames", "400,800", "--labels", "10", "--repeats", "1",
             "--out", str(out), "--csv", str(csv_out)]
        ) == 0
        data = json.loads(out.read_text())
        assert [c["frames"] for c in data["cases"]] == [400, 800]
        assert csv_out.exists()
