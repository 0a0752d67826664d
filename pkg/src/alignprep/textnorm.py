"""Transcript pre-processing: normalization, brackets, stars, romanization.

The normalization pass is deliberately generic so it behaves reasonably for
any language: NFKC, lowercasing, HTML markup removal, then removal of a
documented punctuation set (every character in the Unicode P* and S*
categories except the apostrophe, which the alignment charset keeps).
Digits survive normalization; ``starify`` later replaces each digit run
with a wildcard star and remembers the original so it can be restored after
alignment. ``romanize`` maps text down to the alignment charset, either
with the built-in decomposition/fallback scheme for Latin-ish scripts or
through a user-supplied mapping table for everything else.
"""

from __future__ import annotations

import dataclasses
import logging
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

from .labels import STAR

logger = logging.getLogger(__name__)

# stand-in for the star marker while character-level rules run
_STAR_SENTINEL = ""

_TAG_RE = re.compile(r"<[^<>]*>")
_ENTITY_RE = re.compile(r"&#?[0-9a-z]+;")
_BARE_ENTITY_RE = re.compile(r"\b(?:nbsp|amp|gt|lt|quot|apos);")
_WS_RE = re.compile(r"\s+")
_DIGIT_RUN_RE = re.compile(r"\d+")
_BRACKET_CHARS = "()[]{}"
_BRACKET_PAIR_RE = re.compile(
    r"\([^()\[\]{}]*\)|\[[^()\[\]{}]*\]|\{[^()\[\]{}]*\}"
)

_APOSTROPHE_LIKE = {"’": "'", "ʼ": "'"}

DEFAULT_BRACKET_THRESHOLD = 0.03

_CHARSET_KEEP = frozenset("abcdefghijklmnopqrstuvwxyz' ")
_TABLE_VALUE_RE = re.compile(r"^[a-z' ]*$")

_ROMAN_FALLBACK = {
    "ß": "ss",  # ß
    "æ": "ae",  # æ
    "œ": "oe",  # œ
    "ø": "o",  # ø
    "đ": "d",  # đ
    "ð": "d",  # ð
    "þ": "th",  # þ
    "ł": "l",  # ł
    "ħ": "h",  # ħ
    "ŋ": "ng",  # ŋ
    "ı": "i",  # dotless i
    "ĸ": "k",  # ĸ
    "ʻ": "'",
    "ʼ": "'",
    "ʾ": "'",
    "ʿ": "'",
    "’": "'",
}


def _is_removable(ch: str) -> bool:
    if ch == "'" or ch == _STAR_SENTINEL:
        return False
    return unicodedata.category(ch)[0] in "PS"


def _is_invisible(ch: str) -> bool:
    cat = unicodedata.category(ch)
    return cat == "Cf" or (cat == "Cc" and not ch.isspace())


def normalize(text: str) -> str:
    """Normalize one transcript chunk.

    NFKC, lowercase, HTML tags/entities out, punctuation out (replaced by a
    space so removal never glues words together), invisible format
    characters out, whitespace collapsed. Star markers pass through
    untouched. Idempotent.
    """
    if not isinstance(text, str):
        raise TypeError(f"expected str, got {type(text).__name__}")
    s = text.replace(STAR, _STAR_SENTINEL)
    s = unicodedata.normalize("NFKC", s).lower()
    s = _TAG_RE.sub(" ", s)
    s = _ENTITY_RE.sub(" ", s)
    s = _BARE_ENTITY_RE.sub(" ", s)
    for variant, plain in _APOSTROPHE_LIKE.items():
        s = s.replace(variant, plain)
    chars = []
    for ch in s:
        if _is_removable(ch):
            chars.append(" ")
        elif not _is_invisible(ch):
            chars.append(ch)
    s = _WS_RE.sub(" ", "".join(chars)).strip()
    return s.replace(_STAR_SENTINEL, STAR)


def bracket_rate(verses) -> float:
    """Fraction of verses containing any bracket character."""
    verses = list(verses)
    if not verses:
        return 0.0
    hits = sum(1 for v in verses if any(ch in v for ch in _BRACKET_CHARS))
    return hits / len(verses)


def strip_brackets(text: str) -> str:
    """Drop bracket pairs and the text they enclose (outermost pair wins)."""
    s = text
    while True:
        stripped = _BRACKET_PAIR_RE.sub("", s)
        if stripped == s:
            break
        s = stripped
    s = "".join(ch for ch in s if ch not in _BRACKET_CHARS)
    return _WS_RE.sub(" ", s).strip()


@dataclass(frozen=True)
class StarredText:
    """Starified text plus the map needed to restore replaced digit runs.

    Ordinal 0 is the leading chapter star (nothing to restore); ordinals
    1..N name the digit runs in reading order.
    """

    text: str
    star_map: dict

    def __post_init__(self):
        stars = self.text.count(STAR)
        if stars != len(self.star_map) + 1:
            raise ValueError(
                f"text holds {stars} stars but the map restores "
                f"{len(self.star_map)} digit runs plus one leading star"
            )
        if set(self.star_map) != set(range(1, len(self.star_map) + 1)):
            raise ValueError("star map ordinals must be 1..N")


def starify(text: str) -> StarredText:
    """Prepend the chapter star and replace each digit run with a star."""
    if STAR in text:
        raise ValueError("text already contains star markers")
    runs = _DIGIT_RUN_RE.findall(text)
    body = _DIGIT_RUN_RE.sub(STAR, text)
    starred = STAR + (" " + body if body else "")
    return StarredText(
        text=starred, star_map={i + 1: run for i, run in enumerate(runs)}
    )


def starify_verses(verses):
    """Starify a chapter's verses with one shared restoration map.

    Returns (starred_verses, star_map). The leading chapter star is not
    embedded in any verse; callers pass it separately as the label-sequence
    preamble, which takes ordinal 0. Digit-run ordinals start at 1 and run
    across the whole chapter.
    """
    starred = []
    star_map = {}
    ordinal = 1
    for verse in verses:
        if STAR in verse:
            raise ValueError("verse already contains star markers")
        for run in _DIGIT_RUN_RE.findall(verse):
            star_map[ordinal] = run
            ordinal += 1
        starred.append(_DIGIT_RUN_RE.sub(STAR, verse))
    return starred, star_map


def restore_stars(text: str, ordinals, star_map) -> str:
    """Swap each star for its mapped digit run; unmapped stars vanish."""
    parts = text.split(STAR)
    if len(parts) - 1 != len(ordinals):
        raise ValueError(
            f"text holds {len(parts) - 1} stars but {len(ordinals)} ordinals given"
        )
    pieces = [parts[0]]
    for ordinal, tail in zip(ordinals, parts[1:]):
        replacement = star_map.get(ordinal)
        if replacement is not None:
            pieces.append(replacement)
        pieces.append(tail)
    return _WS_RE.sub(" ", "".join(pieces)).strip()


def destarify_text(starred: str, star_map) -> str:
    """Restore a whole starified chapter; inverse of :func:`starify`."""
    count = starred.count(STAR)
    return restore_stars(starred, range(count), star_map)


def destarify(spans, star_map):
    """Restore digits in every segment text of an aligned span set."""
    segments = tuple(
        dataclasses.replace(
            seg, text=restore_stars(seg.text, seg.star_ordinals, star_map)
        )
        for seg in spans.segments
    )
    return dataclasses.replace(spans, segments=segments)


def load_romanization_table(path) -> dict:
    """Read a TSV mapping file: source grapheme TAB replacement per line."""
    table = {}
    for lineno, line in enumerate(
        Path(path).read_text(encoding="utf-8").splitlines(), start=1
    ):
        if not line or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 2 or not fields[0]:
            raise ValueError(f"{path}:{lineno}: expected 'source<TAB>replacement'")
        source, replacement = fields
        if not _TABLE_VALUE_RE.match(replacement):
            raise ValueError(
                f"{path}:{lineno}: replacement {replacement!r} is outside the "
                "alignment charset"
            )
        if source in table:
            raise ValueError(f"{path}:{lineno}: duplicate source {source!r}")
        table[source] = replacement
    if not table:
        raise ValueError(f"{path}: empty romanization table")
    return table


def _apply_table(s: str, table: dict) -> str:
    keys = sorted(table, key=len, reverse=True)
    out = []
    i = 0
    while i < len(s):
        for key in keys:
            if s.startswith(key, i):
                out.append(table[key])
                i += len(key)
                break
        else:
            out.append(s[i])
            i += 1
    return "".join(out)


def romanize(text: str, table: dict | None = None) -> str:
    """Map text down to the alignment charset (a-z, apostrophe, space, star).

    The built-in scheme lowercases, decomposes, strips combining marks and
    applies a small Latin fallback table; characters still outside the
    charset are dropped and counted. A user table (see
    :func:`load_romanization_table`) is applied first, longest match wins.
    """
    s = text.replace(STAR, _STAR_SENTINEL).lower()
    if table:
        s = _apply_table(s, table)
    s = unicodedata.normalize("NFD", s)
    s = "".join(ch for ch in s if unicodedata.category(ch) != "Mn")
    s = "".join(_ROMAN_FALLBACK.get(ch, ch) for ch in s)
    kept = []
    dropped = 0
    for ch in s:
        if ch in _CHARSET_KEEP or ch == _STAR_SENTINEL:
            kept.append(ch)
        elif ch.isspace():
            kept.append(" ")
        else:
            dropped += 1
    if dropped:
        logger.warning("romanize dropped %d unmappable characters", dropped)
    out = _WS_RE.sub(" ", "".join(kept)).strip()
    return out.replace(_STAR_SENTINEL, STAR)
