"""Scaling benchmark: streaming alignment against the full-trellis oracle.

Measures wall time and the peak number of tracked trellis entries for both
implementations over a range of sequence lengths. Memory is counted in
logical trellis cells through the instrumented counter, not OS RSS: the
point under test is the O(S)-versus-O(T x S) working set, which cell
counting reports portably and deterministically.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import asdict, dataclass

import numpy as np

from .synthetic import (
    emissions_for_path,
    letter_table,
    min_feasible_frames,
    random_labels,
    random_state_path,
)
from .trellis import (
    DEFAULT_BUFFER_ROWS,
    TrellisCounter,
    build_state_chain,
    viterbi_full,
    viterbi_streaming,
)


class BenchmarkError(RuntimeError):
    """The two implementations disagreed; timings would be meaningless."""


@dataclass(frozen=True)
class BenchCase:
    frames: int
    states: int
    buffer_rows: int
    streaming_seconds: float
    full_seconds: float
    streaming_peak_entries: int
    full_peak_entries: int
    paths_equal: bool


@dataclass(frozen=True)
class BenchReport:
    cases: tuple

    def to_json(self) -> str:
        return json.dumps(
            {"cases": [asdict(c) for c in self.cases]}, indent=2, sort_keys=True
        )

    def write_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as f:
            f.write(self.to_json() + "\n")

    def write_csv(self, path) -> None:
        fields = [f for f in BenchCase.__dataclass_fields__]
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.DictWriter(f, fieldnames=fields)
            writer.writeheader()
            for case in self.cases:
                writer.writerow(asdict(case))

    def doubling_ratios(self) -> list:
        """Streaming wall-time ratios between successive cases."""
        times = [c.streaming_seconds for c in self.cases]
        return [b / a for a, b in zip(times, times[1:])]


def _time_best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def run_scaling_bench(
    frame_counts,
    num_labels: int = 50,
    num_letters: int = 26,
    buffer_rows: int = DEFAULT_BUFFER_ROWS,
    seed: int = 0,
    repeats: int = 3,
) -> BenchReport:
    """Align synthetic emissions of growing length with both implementations.

    One label sequence is reused across lengths so the state count stays
    fixed while T grows. Aborts if the implementations ever disagree.
    """
    rng = np.random.default_rng(seed)
    table = letter_table(num_letters)
    labels = random_labels(rng, num_labels, num_letters=num_letters)
    chain = build_state_chain(labels, table)
    floor = min_feasible_frames(chain)

    cases = []
    for frames in frame_counts:
        if frames < floor:
            raise ValueError(f"{frames} frames cannot fit {num_labels} labels")
        state_path = random_state_path(chain, frames, rng)
        emissions = emissions_for_path(
            chain,
            state_path,
            table.vocab_size,
            peak_logprob=-0.1,
            noise_seed=seed + frames,
        )

        stream_counter = TrellisCounter()
        full_counter = TrellisCounter()
        streaming = viterbi_streaming(
            emissions, chain, buffer_rows=buffer_rows, counter=stream_counter
        )
        full = viterbi_full(emissions, chain, counter=full_counter)
        equal = bool(
            np.array_equal(streaming.states, full.states)
            and streaming.log_prob == full.log_prob
        )

        streaming_s = _time_best_of(
            lambda: viterbi_streaming(emissions, chain, buffer_rows=buffer_rows),
            repeats,
        )
        full_s = _time_best_of(lambda: viterbi_full(emissions, chain), repeats)

        case = BenchCase(
            frames=frames,
            states=chain.num_states,
            buffer_rows=buffer_rows,
            streaming_seconds=streaming_s,
            full_seconds=full_s,
            streaming_peak_entries=stream_counter.peak,
            full_peak_entries=full_counter.peak,
            paths_equal=equal,
        )
        if not equal:
            raise BenchmarkError(
                f"implementations disagree at T={frames}: {case}"
            )
        cases.append(case)
    return BenchReport(cases=tuple(cases))
