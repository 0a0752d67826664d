"""CTC state chains and memory-efficient Viterbi forced alignment.

For a target of M labels the trellis walks 2M+1 states laid out as
blank, l1, blank, l2, ..., lM, blank. A path moves through states
monotonically, advancing by 0, 1 or 2 per frame; the +2 skip is only legal
into a label state whose label differs from the one two states back. Valid
paths start in state 0 or 1 and end in the last label or the final blank.

Two implementations share one forward step so their outputs match exactly:

* ``viterbi_full`` keeps the whole T x S score trellis (the reference
  oracle; backpointers are re-derived from stored scores at backtrack time).
* ``viterbi_streaming`` keeps two S-length score rows plus a small
  backtrack buffer of B rows that is flushed to a bulk byte matrix every B
  frames, so the hot working set is O(S) instead of O(T x S).

Tie-breaking is fixed and shared: when terminal states tie, the higher
state index (final blank) wins; when predecessor scores tie during the
forward pass, the smallest predecessor index wins. Scores accumulate in
float64 regardless of the emission dtype.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .emissions import EmissionMatrix, TokenTable
from .labels import STAR, LabelSequence

NEG_INF = float("-inf")
STAR_TOKEN_INDEX = -1
DEFAULT_BUFFER_ROWS = 100


class UnalignableError(RuntimeError):
    """No feasible alignment path exists for the given emissions and labels."""


class TrellisCounter:
    """Tracks logical trellis entries an implementation keeps live.

    Implementations register score cells and device-side backtrack cells;
    the bulk backtrack archive the streaming variant flushes to is deliberately
    not tracked, mirroring cheap host memory next to a scarce accelerator.
    """

    __slots__ = ("current", "peak")

    def __init__(self):
        self.current = 0
        self.peak = 0

    def alloc(self, entries: int) -> None:
        self.current += entries
        if self.current > self.peak:
            self.peak = self.current

    def free(self, entries: int) -> None:
        self.current -= entries

    def reset(self) -> None:
        self.current = 0
        self.peak = 0


@dataclass(frozen=True)
class StateChain:
    """Interleaved blank/label states for one label sequence."""

    labels: LabelSequence
    token_indices: np.ndarray  # (S,) int32; blank 0, star -1
    skip_ok: np.ndarray  # (S,) bool; True where a +2 hop may land

    def __post_init__(self):
        self.token_indices.setflags(write=False)
        self.skip_ok.setflags(write=False)

    @property
    def num_states(self) -> int:
        return int(self.token_indices.shape[0])

    @property
    def num_labels(self) -> int:
        return len(self.labels)

    @property
    def star_states(self) -> np.ndarray:
        return self.token_indices == STAR_TOKEN_INDEX

    def label_position(self, state: int) -> int:
        """Index into the label sequence for a (non-blank) state."""
        if state % 2 == 0:
            raise ValueError(f"state {state} is a blank")
        return (state - 1) // 2


def build_state_chain(labels: LabelSequence, table: TokenTable) -> StateChain:
    """Expand M labels into the 2M+1 interleaved blank/label state chain."""
    if len(labels) == 0:
        raise ValueError("empty label sequence")
    num_states = 2 * len(labels) + 1
    token_indices = np.zeros(num_states, dtype=np.int32)
    for i, tok in enumerate(labels):
        if tok.is_star:
            token_indices[2 * i + 1] = STAR_TOKEN_INDEX
        else:
            try:
                token_indices[2 * i + 1] = table.index(tok.text)
            except KeyError:
                raise ValueError(
                    f"label {tok.text!r} is not in the token table"
                ) from None
    skip_ok = np.zeros(num_states, dtype=bool)
    odd = np.arange(3, num_states, 2)
    skip_ok[odd] = token_indices[odd] != token_indices[odd - 2]
    return StateChain(labels=labels, token_indices=token_indices, skip_ok=skip_ok)


@dataclass(frozen=True)
class FramePath:
    """Per-frame state indices of one alignment plus its total log probability."""

    states: np.ndarray  # (T,) int32
    log_prob: float

    def __post_init__(self):
        self.states.setflags(write=False)

    @property
    def frames(self) -> int:
        return int(self.states.shape[0])


def _state_emission_row(logprobs, safe_tokens, star_mask, t, out):
    """Emission log-probs per state at frame t; star states read 0."""
    out[:] = logprobs[t, safe_tokens]
    out[star_mask] = 0.0
    return out


def _forward_step(prev, emit, skip_ok, cand, arange_s):
    """One Viterbi frame update.

    ``cand`` rows hold, per destination state, the score of coming from
    state-2, state-1 and state itself (in that order, so the first argmax
    hit is the smallest predecessor index). Returns the new score row and
    the chosen step deltas.
    """
    cand[2] = prev
    cand[1, 0] = NEG_INF
    cand[1, 1:] = prev[:-1]
    cand[0, :2] = NEG_INF
    cand[0, 2:] = np.where(skip_ok[2:], prev[:-2], NEG_INF)
    best = cand.argmax(axis=0)
    new = cand[best, arange_s] + emit
    delta = (2 - best).astype(np.uint8)
    return new, delta


def _check_feasible(frames: int, chain: StateChain) -> None:
    if frames < chain.num_labels:
        raise UnalignableError(
            f"{frames} frames cannot emit {chain.num_labels} labels"
        )


def _pick_terminal(final_row, num_states):
    """Terminal state and score; ties go to the higher state (final blank)."""
    last, second = final_row[num_states - 1], final_row[num_states - 2]
    if last == NEG_INF and second == NEG_INF:
        raise UnalignableError("all alignment paths have probability zero")
    return (num_states - 1, float(last)) if last >= second else (num_states - 2, float(second))


def _prepare(emissions: EmissionMatrix, chain: StateChain):
    tokens = chain.token_indices
    if tokens.max(initial=0) >= emissions.vocab_size:
        raise ValueError(
            f"chain references token index {tokens.max()} but the matrix has "
            f"{emissions.vocab_size} columns"
        )
    star_mask = chain.star_states
    safe_tokens = np.where(star_mask, 0, tokens)
    return emissions.logprobs, safe_tokens, star_mask


def viterbi_full(
    emissions: EmissionMatrix, chain: StateChain, counter: TrellisCounter | None = None
) -> FramePath:
    """Reference Viterbi retaining the full T x S score trellis."""
    frames = emissions.frames
    _check_feasible(frames, chain)
    num_states = chain.num_states
    logprobs, safe_tokens, star_mask = _prepare(emissions, chain)
    skip_ok = chain.skip_ok
    arange_s = np.arange(num_states)
    cand = np.empty((3, num_states), dtype=np.float64)
    emit = np.empty(num_states, dtype=np.float64)

    if counter is not None:
        counter.alloc(frames * num_states)
    try:
        alpha = np.full((frames, num_states), NEG_INF, dtype=np.float64)
        _state_emission_row(logprobs, safe_tokens, star_mask, 0, emit)
        alpha[0, 0] = emit[0]
        alpha[0, 1] = emit[1]
        for t in range(1, frames):
            _state_emission_row(logprobs, safe_tokens, star_mask, t, emit)
            alpha[t], _ = _forward_step(alpha[t - 1], emit, skip_ok, cand, arange_s)

        state, score = _pick_terminal(alpha[frames - 1], num_states)
        path = np.empty(frames, dtype=np.int32)
        path[frames - 1] = state
        for t in range(frames - 1, 0, -1):
            prev = alpha[t - 1]
            s = int(path[t])
            # re-derive the forward choice from stored scores: candidates in
            # ascending predecessor order, first maximum wins
            best_p, best_v = s, prev[s]
            if s >= 1 and prev[s - 1] >= best_v:
                best_p, best_v = s - 1, prev[s - 1]
            if s >= 2 and skip_ok[s] and prev[s - 2] >= best_v:
                best_p, best_v = s - 2, prev[s - 2]
            path[t - 1] = best_p
    finally:
        if counter is not None:
            counter.free(frames * num_states)
    return FramePath(states=path, log_prob=score)


def viterbi_streaming(
    emissions: EmissionMatrix,
    chain: StateChain,
    buffer_rows: int = DEFAULT_BUFFER_ROWS,
    counter: TrellisCounter | None = None,
) -> FramePath:
    """Streaming Viterbi: two live score rows plus a B-row backtrack buffer.

    Step deltas (0/1/2 per state per frame) are staged in the buffer and
    flushed to a bulk byte matrix every ``buffer_rows`` frames; the final
    path is recovered by walking the archived deltas backwards. Output is
    identical to :func:`viterbi_full` for every buffer size >= 1.
    """
    if buffer_rows < 1:
        raise ValueError("buffer_rows must be >= 1")
    frames = emissions.frames
    _check_feasible(frames, chain)
    num_states = chain.num_states
    logprobs, safe_tokens, star_mask = _prepare(emissions, chain)
    skip_ok = chain.skip_ok
    arange_s = np.arange(num_states)
    cand = np.empty((3, num_states), dtype=np.float64)
    emit = np.empty(num_states, dtype=np.float64)

    if counter is not None:
        counter.alloc(2 * num_states)
        counter.alloc(buffer_rows * num_states)
    try:
        rows = np.full((2, num_states), NEG_INF, dtype=np.float64)
        buffer = np.zeros((buffer_rows, num_states), dtype=np.uint8)
        archive = np.zeros((frames, num_states), dtype=np.uint8)  # bulk side
        zero_delta = np.zeros(num_states, dtype=np.uint8)  # frame 0 has no step

        flush_start = 0
        for t in range(frames):
            _state_emission_row(logprobs, safe_tokens, star_mask, t, emit)
            if t == 0:
                rows[0, 0] = emit[0]
                rows[0, 1] = emit[1]
                delta = zero_delta
            else:
                rows[t % 2], delta = _forward_step(
                    rows[(t - 1) % 2], emit, skip_ok, cand, arange_s
                )
            buffer[t % buffer_rows] = delta
            if (t + 1) % buffer_rows == 0 or t == frames - 1:
                archive[flush_start : t + 1] = buffer[: t + 1 - flush_start]
                flush_start = t + 1

        state, score = _pick_terminal(rows[(frames - 1) % 2], num_states)
        path = np.empty(frames, dtype=np.int32)
        path[frames - 1] = state
        for t in range(frames - 1, 0, -1):
            path[t - 1] = path[t] - archive[t, path[t]]
    finally:
        if counter is not None:
            counter.free(2 * num_states)
            counter.free(buffer_rows * num_states)
    return FramePath(states=path, log_prob=score)


def path_frame_logprobs(
    emissions: EmissionMatrix, path: FramePath, chain: StateChain
) -> np.ndarray:
    """Per-frame emission log-prob along the path; star frames contribute 0."""
    logprobs, safe_tokens, star_mask = _prepare(emissions, chain)
    states = path.states
    values = logprobs[np.arange(states.shape[0]), safe_tokens[states]]
    values = values.astype(np.float64)
    values[star_mask[states]] = 0.0
    return values


def collapse(path: FramePath, chain: StateChain) -> LabelSequence:
    """Remove blanks and merge repeated states; recovers the target labels."""
    states = path.states
    keep = np.ones(states.shape[0], dtype=bool)
    keep[1:] = states[1:] != states[:-1]
    distinct = states[keep]
    distinct = distinct[distinct % 2 == 1]
    tokens = tuple(chain.labels[(s - 1) // 2] for s in distinct)
    return LabelSequence(tokens)


@dataclass(frozen=True)
class TokenSpan:
    """Emitting frames of one label occurrence (inclusive bounds)."""

    token: str
    label_index: int
    first_frame: int
    last_frame: int
    score: float  # mean emission log-prob over the emitting frames


@dataclass(frozen=True)
class SegmentSpan:
    """One partition cell of [0, T): a token/word/verse group with context.

    ``start_frame``/``end_frame`` are half-open; together the segments of a
    SpanSet tile the whole frame range. ``first_frame``/``last_frame`` bound
    the group's actual emitting frames. Star-only segments are flagged and
    carry no emitted text.
    """

    start_frame: int
    end_frame: int
    first_frame: int
    last_frame: int
    score: float
    text: str
    word: int | None
    verse: int | None
    is_star: bool
    star_ordinals: tuple


@dataclass(frozen=True)
class SpanSet:
    level: str
    frames: int
    token_spans: tuple
    segments: tuple

    def __post_init__(self):
        edge = 0
        for seg in self.segments:
            if seg.start_frame != edge or seg.end_frame <= seg.start_frame:
                raise ValueError("segments must tile the frame range in order")
            edge = seg.end_frame
        if self.segments and edge != self.frames:
            raise ValueError("segments must cover every frame")


_LEVELS = ("token", "word", "verse")


def extract_spans(
    path: FramePath,
    chain: StateChain,
    emissions: EmissionMatrix,
    level: str = "token",
) -> SpanSet:
    """Group the aligned path into token spans and partitioning segments.

    Token spans cover exactly each label occurrence's emitting frames.
    Segments group token spans by token, word or verse and stretch their
    boundaries to the midpoint of the blank gap between neighbouring groups
    (odd gap frame goes to the right), so segments partition [0, T).
    """
    if level not in _LEVELS:
        raise ValueError(f"level must be one of {_LEVELS}, got {level!r}")
    states = path.states
    frames = states.shape[0]
    frame_lp = path_frame_logprobs(emissions, path, chain)

    token_spans = []
    run_state = -1
    run_start = 0
    for t in range(frames + 1):
        state = int(states[t]) if t < frames else -1
        if state == run_state:
            continue
        if run_state > 0 and run_state % 2 == 1:
            idx = (run_state - 1) // 2
            token_spans.append(
                TokenSpan(
                    token=chain.labels[idx].text,
                    label_index=idx,
                    first_frame=run_start,
                    last_frame=t - 1,
                    score=float(frame_lp[run_start:t].mean()),
                )
            )
        run_state = state
        run_start = t

    def group_key(span: TokenSpan):
        tok = chain.labels[span.label_index]
        if level == "token":
            return span.label_index
        if level == "word":
            return (tok.verse, tok.word)
        return tok.verse

    groups: list[list[TokenSpan]] = []
    last_key = object()
    for span in token_spans:
        key = group_key(span)
        if not groups or key != last_key:
            groups.append([span])
            last_key = key
        else:
            groups[-1].append(span)

    segments = []
    for i, group in enumerate(groups):
        first = group[0].first_frame
        last = group[-1].last_frame
        if i == 0:
            start = 0
        else:
            prev_last = groups[i - 1][-1].last_frame
            gap = first - prev_last - 1
            start = prev_last + 1 + gap // 2
        if i == len(groups) - 1:
            end = frames
        else:
            next_first = groups[i + 1][0].first_frame
            gap = next_first - last - 1
            end = last + 1 + gap // 2
        emitting = np.concatenate(
            [frame_lp[s.first_frame : s.last_frame + 1] for s in group]
        )
        tokens = [chain.labels[s.label_index] for s in group]
        segments.append(
            SegmentSpan(
                start_frame=start,
                end_frame=end,
                first_frame=first,
                last_frame=last,
                score=float(emitting.mean()),
                text=_group_text(tokens),
                word=tokens[0].word if level == "word" else None,
                verse=tokens[0].verse if level in ("word", "verse") else None,
                is_star=all(tok.is_star for tok in tokens),
                star_ordinals=tuple(
                    tok.star_ordinal for tok in tokens if tok.is_star
                ),
            )
        )

    return SpanSet(
        level=level,
        frames=frames,
        token_spans=tuple(token_spans),
        segments=tuple(segments),
    )


def _group_text(tokens) -> str:
    parts = []
    last_word = object()
    for tok in tokens:
        if parts and (tok.word != last_word or tok.word is None):
            parts.append(" ")
        parts.append(tok.text)
        last_word = tok.word
    return "".join(parts)
