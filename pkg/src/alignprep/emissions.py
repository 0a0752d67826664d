"""Emission matrices: data model, binary file format, synthetic generation.

An emission matrix holds per-frame log posterior probabilities over a token
vocabulary plus the CTC blank. Blank always sits at column 0. The wildcard
star token is virtual: it never appears in the matrix or in the token table,
alignment assigns it log probability 0 at every frame.
"""

from __future__ import annotations

import re
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

EMISSION_MAGIC = b"CTCE"
EMISSION_FORMAT_VERSION = 1
DEFAULT_STRIDE_MS = 20.0

_HEADER = struct.Struct("<4sIIIf")
_TOKEN_RE = re.compile(r"^[a-z']+$")


class EmissionFormatError(ValueError):
    """Malformed emission file or matrix that violates the format invariants."""


@dataclass(frozen=True)
class EmissionMatrix:
    """T x V grid of natural-log probabilities, blank at column 0.

    Values are <= 0; probability zero is encoded as -inf. Instances are
    immutable after construction and safe to share across threads.
    """

    logprobs: np.ndarray
    stride_ms: float = DEFAULT_STRIDE_MS

    def __post_init__(self):
        arr = np.asarray(self.logprobs, dtype=np.float32)
        if arr.ndim != 2:
            raise EmissionFormatError(f"expected a 2-d matrix, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise EmissionFormatError("empty emission matrix")
        if arr.shape[1] < 2:
            raise EmissionFormatError(
                "vocabulary must hold blank plus at least one label"
            )
        if np.isnan(arr).any():
            raise EmissionFormatError("NaN is not a valid log probability")
        if (arr > 0).any():
            raise EmissionFormatError(
                "log probabilities must be <= 0 (or -inf for zero)"
            )
        if not self.stride_ms > 0:
            raise EmissionFormatError(f"stride_ms must be positive, got {self.stride_ms}")
        if arr.flags.writeable:
            # take our own frozen copy so later caller-side writes cannot
            # leak into a supposedly immutable matrix
            arr = arr.copy()
            arr.setflags(write=False)
        object.__setattr__(self, "logprobs", arr)
        object.__setattr__(self, "stride_ms", float(self.stride_ms))

    @property
    def frames(self) -> int:
        return self.logprobs.shape[0]

    @property
    def vocab_size(self) -> int:
        return self.logprobs.shape[1]

    @property
    def duration_s(self) -> float:
        return self.frames * self.stride_ms / 1000.0


def save_emissions(matrix: EmissionMatrix, path) -> None:
    """Write a matrix to disk; save then load is bit-exact."""
    arr = np.ascontiguousarray(matrix.logprobs, dtype="<f4")
    header = _HEADER.pack(
        EMISSION_MAGIC,
        EMISSION_FORMAT_VERSION,
        matrix.frames,
        matrix.vocab_size,
        matrix.stride_ms,
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(arr.tobytes())


def load_emissions(path) -> EmissionMatrix:
    """Read an emission file, validating header, payload size and values."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise EmissionFormatError(f"{path}: truncated header")
    magic, version, frames, vocab, stride_ms = _HEADER.unpack_from(raw)
    if magic != EMISSION_MAGIC:
        raise EmissionFormatError(f"{path}: bad magic {magic!r}")
    if version != EMISSION_FORMAT_VERSION:
        raise EmissionFormatError(f"{path}: unsupported format version {version}")
    if frames == 0:
        raise EmissionFormatError(f"{path}: empty emission matrix")
    if vocab < 2:
        raise EmissionFormatError(f"{path}: vocabulary size {vocab} < 2")
    payload = raw[_HEADER.size :]
    expected = frames * vocab * 4
    if len(payload) != expected:
        raise EmissionFormatError(
            f"{path}: payload holds {len(payload)} bytes, header promises {expected}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(frames, vocab)
    if np.isposinf(arr).any():
        raise EmissionFormatError(f"{path}: +inf is not a valid log probability")
    try:
        return EmissionMatrix(arr, stride_ms=float(stride_ms))
    except EmissionFormatError as exc:
        raise EmissionFormatError(f"{path}: {exc}") from None


def synth_emissions(
    true_path,
    vocab_size: int,
    peak_logprob: float = -0.05,
    noise_seed: int = 0,
    *,
    stride_ms: float = DEFAULT_STRIDE_MS,
    frame_offset: int = 0,
) -> EmissionMatrix:
    """Generate emissions whose per-frame argmax follows ``true_path``.

    Frame t gives probability exp(peak_logprob) to true_path[t]; the rest of
    the mass is spread pseudo-randomly over the other tokens. Randomness is
    keyed on (noise_seed, frame_offset + t), so generating a long matrix in
    chunks (passing each chunk's start as frame_offset) reproduces the
    single-shot matrix frame for frame. Rows normalize to log-sum-exp 0
    within float32 rounding.
    """
    path = np.asarray(true_path, dtype=np.int64)
    if path.ndim != 1 or path.size == 0:
        raise ValueError("true_path must be a non-empty 1-d index sequence")
    if vocab_size < 2:
        raise ValueError("vocab_size must be >= 2")
    if path.min() < 0 or path.max() >= vocab_size:
        raise IndexError(
            f"path indices must lie in [0, {vocab_size}), got "
            f"[{path.min()}, {path.max()}]"
        )
    if peak_logprob > 0:
        raise ValueError("peak_logprob must be <= 0")
    if noise_seed < 0 or frame_offset < 0:
        raise ValueError("noise_seed and frame_offset must be non-negative")

    peak_prob = float(np.exp(peak_logprob))
    remainder = 1.0 - peak_prob
    frames = path.size
    out = np.empty((frames, vocab_size), dtype=np.float32)
    others = np.arange(vocab_size - 1)
    for t in range(frames):
        rng = np.random.default_rng((noise_seed, frame_offset + t))
        weights = rng.random(vocab_size - 1) + 0.5
        probs = remainder * weights / weights.sum()
        if probs.size and probs.max() >= peak_prob:
            raise ValueError(
                f"peak_logprob {peak_logprob} too small to dominate frame {t}; "
                "raise it or grow the vocabulary"
            )
        row = np.empty(vocab_size, dtype=np.float64)
        true = path[t]
        cols = np.where(others < true, others, others + 1)
        with np.errstate(divide="ignore"):
            row[cols] = np.log(probs)
        row[true] = peak_logprob
        out[t] = row
    out.setflags(write=False)
    return EmissionMatrix(out, stride_ms=stride_ms)


def concat_chunks(chunks) -> EmissionMatrix:
    """Concatenate chunk-wise matrices in order, with no overlap or gap."""
    chunks = list(chunks)
    if not chunks:
        raise ValueError("no chunks to concatenate")
    head = chunks[0]
    for i, chunk in enumerate(chunks[1:], start=1):
        if chunk.vocab_size != head.vocab_size:
            raise EmissionFormatError(
                f"chunk {i} has vocabulary {chunk.vocab_size}, "
                f"chunk 0 has {head.vocab_size}"
            )
        if chunk.stride_ms != head.stride_ms:
            raise EmissionFormatError(
                f"chunk {i} has stride {chunk.stride_ms} ms, "
                f"chunk 0 has {head.stride_ms} ms"
            )
    if len(chunks) == 1:
        return head
    joined = np.concatenate([c.logprobs for c in chunks], axis=0)
    joined.setflags(write=False)
    return EmissionMatrix(joined, stride_ms=head.stride_ms)


@dataclass(frozen=True)
class TokenTable:
    """Ordered label vocabulary; blank is implicit at index 0.

    ``tokens[i]`` is the label at matrix column i + 1. Labels are drawn from
    the alignment charset (lowercase a-z and the apostrophe).
    """

    tokens: tuple
    _lookup: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        tokens = tuple(self.tokens)
        if not tokens:
            raise ValueError("token table needs at least one label")
        for tok in tokens:
            if not _TOKEN_RE.match(tok):
                raise ValueError(f"token {tok!r} is outside the alignment charset")
        if len(set(tokens)) != len(tokens):
            raise ValueError("token table entries must be unique")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(
            self, "_lookup", {tok: i + 1 for i, tok in enumerate(tokens)}
        )

    @property
    def vocab_size(self) -> int:
        return len(self.tokens) + 1

    def index(self, token: str) -> int:
        try:
            return self._lookup[token]
        except KeyError:
            raise KeyError(f"unknown token {token!r}") from None

    def token(self, index: int) -> str:
        if index < 1 or index > len(self.tokens):
            raise IndexError(f"no label at index {index} (blank is 0)")
        return self.tokens[index - 1]

    def __contains__(self, token: str) -> bool:
        return token in self._lookup


def load_token_table(path) -> TokenTable:
    text = Path(path).read_text(encoding="utf-8")
    tokens = [line for line in text.splitlines() if line]
    return TokenTable(tuple(tokens))


def save_token_table(table: TokenTable, path) -> None:
    Path(path).write_text("\n".join(table.tokens) + "\n", encoding="utf-8")
