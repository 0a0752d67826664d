"""Synthetic alignment instances for benchmarks and verification.

Builders here construct label sequences, feasible ground-truth state paths
and matching emission matrices so alignment behaviour can be checked
against known truth. Everything is deterministic given an RNG / seed.
"""

from __future__ import annotations

import numpy as np

from .emissions import EmissionMatrix, TokenTable, synth_emissions
from .labels import STAR, LabelSequence, LabelToken
from .trellis import StateChain, build_state_chain

LETTERS = "abcdefghijklmnopqrstuvwxyz"


def letter_table(num_letters: int = 26, apostrophe: bool = True) -> TokenTable:
    tokens = tuple(LETTERS[:num_letters]) + (("'",) if apostrophe else ())
    return TokenTable(tokens)


def random_labels(
    rng: np.random.Generator,
    num_labels: int,
    num_letters: int = 26,
    leading_star: bool = False,
    words: bool = True,
) -> LabelSequence:
    """Random letter labels, optionally star-led, with word provenance."""
    tokens = []
    star_next = 0
    if leading_star:
        tokens.append(LabelToken(STAR, star_ordinal=star_next))
        star_next += 1
        num_labels -= 1
    word = 0
    left_in_word = int(rng.integers(2, 6)) if words else num_labels
    for _ in range(max(num_labels, 0)):
        tokens.append(
            LabelToken(LETTERS[int(rng.integers(0, num_letters))], word=word, verse=0)
        )
        left_in_word -= 1
        if words and left_in_word == 0:
            word += 1
            left_in_word = int(rng.integers(2, 6))
    if not tokens:
        raise ValueError("num_labels too small")
    return LabelSequence(tuple(tokens))


def min_feasible_frames(chain: StateChain) -> int:
    """Fewest frames any valid path through the chain can take."""
    tokens = chain.token_indices
    odd = np.arange(1, chain.num_states, 2)
    forced_blanks = int((tokens[odd[1:]] == tokens[odd[:-1]]).sum())
    return chain.num_labels + forced_blanks


def random_state_path(
    chain: StateChain, frames: int, rng: np.random.Generator
) -> np.ndarray:
    """A uniform-ish random feasible state path of the requested length.

    Every label gets at least one frame; blanks between equal neighbouring
    labels get at least one frame (the skip there is illegal); remaining
    frames spread randomly over all states.
    """
    num_states = chain.num_states
    tokens = chain.token_indices
    dwell = np.zeros(num_states, dtype=np.int64)
    dwell[1::2] = 1
    for s in range(3, num_states, 2):
        if tokens[s] == tokens[s - 2]:
            dwell[s - 1] = 1
    base = int(dwell.sum())
    if frames < base:
        raise ValueError(f"need at least {base} frames, got {frames}")
    dwell += rng.multinomial(frames - base, np.full(num_states, 1.0 / num_states))
    return np.repeat(np.arange(num_states, dtype=np.int32), dwell)


def spanned_state_path(chain: StateChain, label_spans, gaps) -> np.ndarray:
    """Build a state path from explicit per-label span and per-blank gap lengths.

    ``label_spans[i]`` is the dwell of label i (>= 1); ``gaps[j]`` the dwell
    of blank j for j in 0..M (leading, between labels, trailing).
    """
    if len(label_spans) != chain.num_labels or len(gaps) != chain.num_labels + 1:
        raise ValueError("span/gap counts do not match the chain")
    dwell = np.zeros(chain.num_states, dtype=np.int64)
    dwell[1::2] = np.asarray(label_spans)
    dwell[0::2] = np.asarray(gaps)
    if (dwell[1::2] < 1).any():
        raise ValueError("every label needs at least one frame")
    return np.repeat(np.arange(chain.num_states, dtype=np.int32), dwell)


def path_token_indices(chain: StateChain, state_path: np.ndarray) -> np.ndarray:
    """Per-frame emitted token index for a ground-truth path (no stars)."""
    tokens = chain.token_indices[state_path]
    if (tokens < 0).any():
        raise ValueError("ground-truth paths cannot pass through star states")
    return tokens


def emissions_for_path(
    chain: StateChain,
    state_path: np.ndarray,
    vocab_size: int,
    peak_logprob: float = -0.05,
    noise_seed: int = 0,
    stride_ms: float = 20.0,
) -> EmissionMatrix:
    """Emissions whose per-frame argmax follows the given state path."""
    return synth_emissions(
        path_token_indices(chain, state_path),
        vocab_size,
        peak_logprob=peak_logprob,
        noise_seed=noise_seed,
        stride_ms=stride_ms,
    )


def random_normalized_emissions(
    rng: np.random.Generator,
    frames: int,
    vocab_size: int,
    stride_ms: float = 20.0,
    spread: float = 2.0,
) -> EmissionMatrix:
    """Rows are log-softmaxed gaussians: unstructured but valid emissions."""
    logits = rng.normal(0.0, spread, size=(frames, vocab_size))
    logits -= logits.max(axis=1, keepdims=True)
    logprobs = logits - np.log(np.exp(logits).sum(axis=1, keepdims=True))
    return EmissionMatrix(logprobs.astype(np.float32), stride_ms=stride_ms)


def preamble_instance(
    rng: np.random.Generator,
    preamble_frames: int,
    num_labels: int = 12,
    num_letters: int = 8,
    peak_logprob: float = -0.1,
    noise_seed: int = 0,
):
    """A spoken opening that the transcript only covers with a star.

    The audio truth is ``preamble_frames`` of random letters followed by the
    real text; the transcript is the star plus the text. The first text
    label gets a span of at most 3 frames: the zero-cost star soaks up the
    head of the following span, so a long first span would legitimately
    shift the observed onset. Returns (emissions, chain, truth) where truth
    carries the ground-truth onset of the first text label.
    """
    table = letter_table(num_letters)
    labels = random_labels(rng, num_labels, num_letters=num_letters)
    chain = build_state_chain(labels, table)

    spans = [int(rng.integers(1, 4))]
    spans += [int(rng.integers(1, 6)) for _ in range(num_labels - 1)]
    gaps = [int(rng.integers(0, 4)) for _ in range(num_labels + 1)]
    text_states = spanned_state_path(chain, spans, gaps)
    text_tokens = path_token_indices(chain, text_states)
    lead_blanks = gaps[0]

    preamble_tokens = rng.integers(1, table.vocab_size, size=preamble_frames)
    true_tokens = np.concatenate([preamble_tokens, text_tokens])
    emissions = synth_emissions(
        true_tokens,
        table.vocab_size,
        peak_logprob=peak_logprob,
        noise_seed=noise_seed,
    )

    starred = LabelSequence(
        (LabelToken(STAR, star_ordinal=0),) + tuple(labels.tokens)
    )
    starred_chain = build_state_chain(starred, table)
    truth = {
        "preamble_frames": preamble_frames,
        "first_label_onset": preamble_frames + lead_blanks,
        "first_label_span": spans[0],
    }
    return emissions, starred_chain, truth
