"""Target label sequences: charset tokens with word/verse provenance.

A label sequence is what the aligner consumes: one token per alignment unit,
where a token is a single character from the alignment charset (a-z or the
apostrophe) or the wildcard star. Each token remembers which word and verse
it came from so aligned frame spans can be regrouped into text segments.
"""

from __future__ import annotations

from dataclasses import dataclass

STAR = "⟨∗⟩"  # ⟨∗⟩ wildcard marker, treated as one token

_CHARSET = frozenset("abcdefghijklmnopqrstuvwxyz'")


@dataclass(frozen=True)
class LabelToken:
    text: str
    word: int | None = None
    verse: int | None = None
    star_ordinal: int | None = None

    def __post_init__(self):
        if self.text == STAR:
            if self.star_ordinal is None:
                raise ValueError("star tokens need a star_ordinal")
        elif self.text not in _CHARSET:
            raise ValueError(f"label {self.text!r} is outside the alignment charset")
        elif self.star_ordinal is not None:
            raise ValueError("only star tokens carry a star_ordinal")

    @property
    def is_star(self) -> bool:
        return self.text == STAR


@dataclass(frozen=True)
class LabelSequence:
    tokens: tuple

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)

    def __getitem__(self, i):
        return self.tokens[i]

    @property
    def texts(self) -> tuple:
        return tuple(tok.text for tok in self.tokens)

    @classmethod
    def from_text(cls, text: str, verse: int | None = None) -> "LabelSequence":
        """Tokenize one romanized text: characters per word, stars atomic."""
        tokens, _, _ = _tokenize(text, verse=verse, word_start=0, star_start=0)
        return cls(tuple(tokens))

    @classmethod
    def from_verses(cls, verses, preamble: str | None = None) -> "LabelSequence":
        """Tokenize a chapter given per-verse romanized texts.

        ``preamble`` (usually a lone star absorbing unscripted openings) is
        tokenized first with no word/verse identity. Word indices run across
        the whole chapter; star ordinals count stars in reading order, the
        preamble star(s) first.
        """
        tokens: list = []
        star_next = 0
        if preamble:
            for piece in _split_stars(preamble):
                if piece != STAR:
                    raise ValueError(
                        f"preamble may only hold star tokens, got {piece!r}"
                    )
                tokens.append(LabelToken(STAR, star_ordinal=star_next))
                star_next += 1
        word_next = 0
        for verse_idx, text in enumerate(verses):
            more, word_next, star_next = _tokenize(
                text, verse=verse_idx, word_start=word_next, star_start=star_next
            )
            tokens.extend(more)
        return cls(tuple(tokens))


def _split_stars(text: str):
    """Split text into STAR markers and the runs between them."""
    pieces = []
    rest = text
    while rest:
        at = rest.find(STAR)
        if at < 0:
            pieces.append(rest)
            break
        if at > 0:
            pieces.append(rest[:at])
        pieces.append(STAR)
        rest = rest[at + len(STAR) :]
    return pieces


def _tokenize(text: str, verse, word_start: int, star_start: int):
    tokens = []
    word = word_start
    star = star_start
    for raw_word in text.split():
        emitted = False
        for piece in _split_stars(raw_word):
            if piece == STAR:
                tokens.append(
                    LabelToken(STAR, word=word, verse=verse, star_ordinal=star)
                )
                star += 1
                emitted = True
            else:
                for ch in piece:
                    tokens.append(LabelToken(ch, word=word, verse=verse))
                    emitted = True
        if emitted:
            word += 1
    return tokens, word, star
