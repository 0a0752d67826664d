"""Unlabeled-audio sample construction from classifier segment labels.

Speech runs separated by short music/noise stretches are joined so samples
stay long and mostly speech, then each joined interval is randomly cut into
pieces between 5.5 and 30 seconds.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SEGMENT_CLASSES = ("speech", "music", "noise", "silence")
DEFAULT_JOIN_FRACTION = 0.20
DEFAULT_MIN_SAMPLE_S = 5.5
DEFAULT_MAX_SAMPLE_S = 30.0


@dataclass(frozen=True)
class LabeledSegment:
    start_s: float
    end_s: float
    label: str

    def __post_init__(self):
        if self.label not in SEGMENT_CLASSES:
            raise ValueError(
                f"label must be one of {SEGMENT_CLASSES}, got {self.label!r}"
            )
        if not self.end_s > self.start_s:
            raise ValueError(f"segment [{self.start_s}, {self.end_s}] is empty")

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s


def join_segments(segments, max_gap_fraction: float = DEFAULT_JOIN_FRACTION):
    """Merge speech runs across short non-speech gaps; discard the rest.

    Two speech runs merge when the material between them is no longer than
    ``max_gap_fraction`` of the merged stretch (left + gap + right). Merging
    walks left to right and re-evaluates after each merge, so a grown run
    can swallow further gaps. Everything between speech runs counts as gap,
    whatever its class. Returns (start_s, end_s) speech sample intervals.
    """
    segments = sorted(segments, key=lambda s: s.start_s)
    for prev, cur in zip(segments, segments[1:]):
        if cur.start_s < prev.end_s:
            raise ValueError(
                f"segments overlap: [{prev.start_s}, {prev.end_s}] and "
                f"[{cur.start_s}, {cur.end_s}]"
            )
    speech = [(s.start_s, s.end_s) for s in segments if s.label == "speech"]
    if not speech:
        return []
    merged = [speech[0]]
    for start, end in speech[1:]:
        left_start, left_end = merged[-1]
        gap = start - left_end
        total = (left_end - left_start) + gap + (end - start)
        if gap <= max_gap_fraction * total:
            merged[-1] = (left_start, end)
        else:
            merged.append((start, end))
    return merged


def partition_sample(
    interval,
    min_s: float = DEFAULT_MIN_SAMPLE_S,
    max_s: float = DEFAULT_MAX_SAMPLE_S,
    seed: int = 0,
):
    """Randomly cut one interval into pieces of min_s..max_s seconds.

    Cut lengths are uniform in [min_s, max_s]. Pieces tile the interval from
    the left; a final remainder shorter than min_s is discarded, and an
    interval shorter than min_s yields nothing. Deterministic per seed.
    """
    return _partition(interval, min_s, max_s, np.random.default_rng(seed))


def _partition(interval, min_s, max_s, rng):
    start, end = float(interval[0]), float(interval[1])
    if min_s >= max_s:
        raise ValueError(f"min_s {min_s} must be below max_s {max_s}")
    if min_s <= 0:
        raise ValueError(f"min_s must be positive, got {min_s}")
    if not end > start:
        raise ValueError(f"interval [{start}, {end}] has no duration")
    pieces = []
    pos = start
    while True:
        remaining = end - pos
        if remaining < min_s:
            break  # tail too short, discard
        if remaining <= max_s:
            pieces.append((pos, end))
            break
        cut = rng.uniform(min_s, max_s)
        pieces.append((pos, pos + cut))
        pos += cut
    return pieces
