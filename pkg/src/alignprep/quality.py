"""Alignment confidence scoring, character error rate, and filtering rules.

The confidence score compares what the alignment was forced to accept with
what the acoustic model would have picked freely: the length-normalized
difference between the aligned path's log probability and the sum of
per-frame maxima. It is 0 when the path is the per-frame argmax everywhere
and negative otherwise. Wildcard star frames are excluded from both terms
and from the length so the score stays in (-inf, 0].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import textnorm
from .emissions import EmissionMatrix
from .trellis import FramePath, StateChain, path_frame_logprobs

DEFAULT_SCORE_THRESHOLD = -0.2
DEFAULT_SAMPLE_CER_THRESHOLD = 0.10
DEFAULT_RECORDING_CER_THRESHOLD = 0.05


class DegenerateAlignmentError(ValueError):
    """The scored frame range contains nothing but star frames."""


@dataclass(frozen=True)
class AlignmentScore:
    aligned_logprob: float
    greedy_logprob: float
    frames: int  # non-star frames in the scored range
    score: float


def alignment_score(
    emissions: EmissionMatrix,
    path: FramePath,
    chain: StateChain,
    frame_range: tuple | None = None,
) -> AlignmentScore:
    """Length-normalized aligned-vs-greedy log-probability gap.

    ``frame_range`` restricts scoring to a half-open frame window (used to
    score individual samples cut from one long alignment); default is the
    whole path. Star frames are skipped: the wildcard is not a real model
    output, and counting its certain hit would let scores leak above 0.
    """
    lo, hi = frame_range if frame_range is not None else (0, path.frames)
    if not 0 <= lo < hi <= path.frames:
        raise ValueError(f"bad frame range [{lo}, {hi}) for {path.frames} frames")
    star_frames = chain.star_states[path.states[lo:hi]]
    keep = ~star_frames
    frames = int(keep.sum())
    if frames == 0:
        raise DegenerateAlignmentError(
            "degenerate alignment: every frame in the range maps to the star token"
        )
    aligned_lp = path_frame_logprobs(emissions, path, chain)[lo:hi]
    aligned = float(aligned_lp[keep].sum())
    maxima = emissions.logprobs[lo:hi].max(axis=1).astype(np.float64)
    greedy = float(maxima[keep].sum())
    return AlignmentScore(
        aligned_logprob=aligned,
        greedy_logprob=greedy,
        frames=frames,
        score=(aligned - greedy) / frames,
    )


def edit_distance(a: str, b: str) -> int:
    """Unit-cost Levenshtein distance over Unicode scalar values."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(
                prev[j] + 1,  # delete
                cur[j - 1] + 1,  # insert
                prev[j - 1] + (ca != cb),  # substitute
            )
        prev = cur
    return prev[-1]


def cer(reference: str, hypothesis: str, normalize: bool = True) -> float:
    """Character error rate: edit distance over reference length.

    Both sides pass through text normalization by default, mirroring how
    the pipeline compares transcripts; pass ``normalize=False`` for raw
    strings. An empty reference has no defined rate and raises.
    """
    if normalize:
        reference = textnorm.normalize(reference)
        hypothesis = textnorm.normalize(hypothesis)
    if not reference:
        raise ValueError("empty reference: character error rate is undefined")
    return edit_distance(reference, hypothesis) / len(reference)


@dataclass(frozen=True)
class FilterDecision:
    id: str
    value: float
    kept: bool
    reason: str | None = None


@dataclass(frozen=True)
class FilterReport:
    decisions: tuple

    @property
    def kept(self) -> tuple:
        return tuple(d for d in self.decisions if d.kept)

    @property
    def dropped(self) -> tuple:
        return tuple(d for d in self.decisions if not d.kept)

    @property
    def kept_ids(self) -> set:
        return {d.id for d in self.kept}


def _threshold_filter(items, threshold, drop_when_above: bool, what: str) -> FilterReport:
    decisions = []
    for item_id, value in items:
        value = float(value)
        if drop_when_above:
            kept = not value > threshold
        else:
            kept = value > threshold
        reason = None if kept else f"{what} {value:.6g} vs threshold {threshold:g}"
        decisions.append(FilterDecision(id=item_id, value=value, kept=kept, reason=reason))
    return FilterReport(decisions=tuple(decisions))


def filter_samples(
    sample_cers, threshold: float = DEFAULT_SAMPLE_CER_THRESHOLD
) -> FilterReport:
    """Drop samples whose CER strictly exceeds the threshold (default 10%)."""
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return _threshold_filter(sample_cers, threshold, True, "cer")


def filter_recordings(
    recording_dev_cers, threshold: float = DEFAULT_RECORDING_CER_THRESHOLD
) -> FilterReport:
    """Drop recordings whose dev-set CER strictly exceeds the threshold (5%)."""
    if not 0 <= threshold <= 1:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    return _threshold_filter(recording_dev_cers, threshold, True, "dev cer")


def filter_by_score(
    sample_scores, threshold: float = DEFAULT_SCORE_THRESHOLD
) -> FilterReport:
    """Keep samples whose confidence score is strictly above the threshold."""
    if threshold > 0:
        raise ValueError(f"score threshold must be <= 0, got {threshold}")
    return _threshold_filter(sample_scores, threshold, False, "score")
