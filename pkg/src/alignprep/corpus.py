"""Corpus manifests, deterministic splits, and multilingual sampling weights."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass

import numpy as np

SPLITS = ("train", "dev", "test", "unassigned")
DEFAULT_DEV_BOOK = "MRK"
DEFAULT_TEST_BOOK = "JHN"
DEFAULT_SET_FRACTION = 0.10
DEFAULT_MAX_SET_S = 2 * 3600.0
DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)
DEFAULT_MIN_TRAIN_S = 5 * 60.0

# conventional New Testament order; used to make the fallback greedy
# assignment deterministic across recordings
CANONICAL_BOOKS = (
    "MAT", "MRK", "LUK", "JHN", "ACT", "ROM", "1CO", "2CO", "GAL", "EPH",
    "PHP", "COL", "1TH", "2TH", "1TI", "2TI", "TIT", "PHM", "HEB", "JAS",
    "1PE", "2PE", "1JN", "2JN", "3JN", "JUD", "REV",
)


@dataclass(frozen=True)
class ManifestRecord:
    """One corpus sample (or one chapter, before alignment cuts it up)."""

    id: str
    language: str
    recording_id: str
    duration_s: float
    book: str | None = None
    chapter: int | None = None
    verse: int | None = None
    emission: str | None = None
    raw_text: str | None = None
    text: str | None = None
    split: str = "unassigned"
    score: float | None = None
    cer: float | None = None
    start_s: float | None = None
    end_s: float | None = None

    def __post_init__(self):
        if not self.duration_s > 0:
            raise ValueError(f"record {self.id}: duration must be positive")
        if self.split not in SPLITS:
            raise ValueError(f"record {self.id}: unknown split {self.split!r}")

    def to_dict(self) -> dict:
        return {
            k: v for k, v in dataclasses.asdict(self).items() if v is not None
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ManifestRecord":
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in names})


def write_manifest(records, path) -> None:
    partial = f"{path}.partial"
    with open(partial, "w", encoding="utf-8") as f:
        for rec in records:
            row = rec.to_dict() if isinstance(rec, ManifestRecord) else rec
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    os.replace(partial, path)


def read_manifest(path):
    records = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(ManifestRecord.from_dict(json.loads(line)))
    return records


def split_by_book(
    records,
    dev_book: str = DEFAULT_DEV_BOOK,
    test_book: str = DEFAULT_TEST_BOOK,
):
    """Assign splits by book, the same books for every recording.

    Records from ``dev_book`` go to dev, ``test_book`` to test, everything
    else to train. A recording missing either named book falls back to the
    duration-target split instead.
    """
    out = []
    for _, group in _group_by(records, lambda r: r.recording_id):
        books = {r.book for r in group}
        if None in books:
            missing = [r.id for r in group if r.book is None]
            raise ValueError(f"records without a book id: {missing[:3]}")
        if dev_book in books and test_book in books:
            for rec in group:
                if rec.book == dev_book:
                    split = "dev"
                elif rec.book == test_book:
                    split = "test"
                else:
                    split = "train"
                out.append(dataclasses.replace(rec, split=split))
        else:
            out.extend(fallback_split(group))
    return out


def fallback_split(
    records,
    set_fraction: float = DEFAULT_SET_FRACTION,
    max_set_s: float = DEFAULT_MAX_SET_S,
    book_order=CANONICAL_BOOKS,
):
    """Best-effort split by whole books toward a duration target per set.

    Each of dev and test receives whole books, in canonical order, until it
    holds at least min(set_fraction x total, max_set_s) seconds; the rest is
    train. Overshoot is accepted rather than splitting a book across sets.
    """
    records = list(records)
    if not records:
        return []
    durations: dict = {}
    for rec in records:
        durations[rec.book] = durations.get(rec.book, 0.0) + rec.duration_s
    total = sum(durations.values())
    target = min(set_fraction * total, max_set_s)

    rank = {book: i for i, book in enumerate(book_order)}
    books = sorted(durations, key=lambda b: (rank.get(b, len(rank)), str(b)))

    assignment: dict = {}
    for set_name in ("dev", "test"):
        acc = 0.0
        for book in books:
            if book in assignment:
                continue
            assignment[book] = set_name
            acc += durations[book]
            if acc >= target:
                break
    return [
        dataclasses.replace(rec, split=assignment.get(rec.book, "train"))
        for rec in records
    ]


def split_random(
    records,
    fractions=DEFAULT_FRACTIONS,
    min_train_s: float = DEFAULT_MIN_TRAIN_S,
    seed: int = 0,
):
    """Per-language random split; languages with thin training data vanish.

    Samples of each language are shuffled deterministically and divided by
    ``fractions`` (train, dev, test) with largest-remainder rounding.
    Languages whose resulting train portion is shorter than ``min_train_s``
    are dropped entirely. Returns (records, dropped_languages).
    """
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9 or min(fractions) < 0:
        raise ValueError(f"fractions must be three non-negative shares summing to 1")
    out = []
    dropped = []
    for language, group in _group_by(records, lambda r: r.language):
        group = sorted(group, key=lambda r: r.id)
        rng = np.random.default_rng([seed, stable_hash(language)])
        order = rng.permutation(len(group))
        counts = _largest_remainder(len(group), fractions)
        assigned = []
        cursor = 0
        for split, count in zip(("train", "dev", "test"), counts):
            for i in order[cursor : cursor + count]:
                assigned.append(dataclasses.replace(group[i], split=split))
            cursor += count
        train_s = sum(r.duration_s for r in assigned if r.split == "train")
        if train_s < min_train_s:
            dropped.append(language)
        else:
            out.extend(sorted(assigned, key=lambda r: r.id))
    return out, dropped


def stable_hash(text: str) -> int:
    return int.from_bytes(
        hashlib.blake2s(text.encode("utf-8"), digest_size=8).digest(), "big"
    )


def _largest_remainder(n: int, fractions):
    exact = [n * f for f in fractions]
    counts = [int(x) for x in exact]
    rest = n - sum(counts)
    order = sorted(
        range(len(fractions)), key=lambda i: (counts[i] - exact[i], i)
    )
    for i in order[:rest]:
        counts[i] += 1
    return counts


def _group_by(records, key):
    groups: dict = {}
    for rec in records:
        groups.setdefault(key(rec), []).append(rec)
    return sorted(groups.items(), key=lambda kv: str(kv[0]))


def sampling_weights(durations, beta: float):
    """Temperature-style sampling distribution over languages.

    Each weight is proportional to (n_l / N) ** beta: beta=1 keeps raw
    proportions, beta=0 is uniform, values between trade high- against
    low-resource languages. Accepts a sequence (returns a list) or a
    mapping (returns a dict keyed the same way).
    """
    if isinstance(durations, dict):
        keys = list(durations)
        weights = sampling_weights([durations[k] for k in keys], beta)
        return dict(zip(keys, weights))
    if not 0 <= beta <= 1:
        raise ValueError(f"beta must be in [0, 1], got {beta}")
    n = np.asarray(list(durations), dtype=np.float64)
    if n.size == 0 or (n < 0).any() or not (n > 0).any():
        raise ValueError("durations must be non-negative with at least one positive")
    shares = np.power(n / n.sum(), beta)
    return [float(w) for w in shares / shares.sum()]


@dataclass(frozen=True)
class SamplingSpec:
    """Per-dataset, per-language durations plus the two temperatures."""

    durations: dict  # dataset -> {language -> seconds}
    beta_language: float = 0.5
    beta_dataset: float = 0.5

    def __post_init__(self):
        for beta in (self.beta_language, self.beta_dataset):
            if not 0 <= beta <= 1:
                raise ValueError(f"beta must be in [0, 1], got {beta}")


def two_stage_weights(spec: SamplingSpec) -> dict:
    """Balance languages within each dataset, then datasets against each other.

    Stage one weights the languages of every dataset with beta_language;
    stage two treats each dataset as one unit of size sum(durations) and
    weights them with beta_dataset. The final weight of (dataset, language)
    is the product; all weights sum to 1.
    """
    totals = {ds: sum(langs.values()) for ds, langs in spec.durations.items()}
    dataset_w = sampling_weights(totals, spec.beta_dataset)
    out = {}
    for ds, langs in spec.durations.items():
        lang_w = sampling_weights(langs, spec.beta_language)
        out[ds] = {lang: dataset_w[ds] * w for lang, w in lang_w.items()}
    return out
