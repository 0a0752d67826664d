import json
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alignprep import (
    STAR,
    LabelSequence,
    bracket_rate,
    destarify_text,
    load_romanization_table,
    normalize,
    romanize,
    starify,
    strip_brackets,
)
from alignprep.textnorm import StarredText, restore_stars, starify_verses

GOLDEN = Path(__file__).parent / "data" / "normalization_golden.json"

ALIGN_CHARSET = set("abcdefghijklmnopqrstuvwxyz' ") | {STAR}


def golden_cases():
    return json.loads(GOLDEN.read_text(encoding="utf-8"))


def run_case(case):
    op = case["op"]
    if op == "normalize":
        assert normalize(case["input"]) == case["expected"]
    elif op == "bracket_rate":
        rate = bracket_rate(case["input"])
        assert rate == pytest.approx(case["expected"])
        assert (rate >= 0.03) == case["flagged"]
    elif op == "bracket_rate_count":
        verses = ["with [brackets]"] * case["bracketed"]
        verses += ["plain verse"] * (case["verses"] - case["bracketed"])
        rate = bracket_rate(verses)
        assert rate == pytest.approx(case["expected"])
        assert (rate >= 0.03) == case["flagged"]
    elif op == "strip_brackets":
        assert strip_brackets(case["input"]) == case["expected"]
    elif op == "starify":
        starred = starify(case["input"])
        assert starred.text == case["expected"]
        assert starred.star_map == {int(k): v for k, v in case["star_map"].items()}
    elif op == "starify_roundtrip":
        starred = starify(case["input"])
        assert destarify_text(starred.text, starred.star_map) == case["input"]
    elif op == "romanize":
        out = romanize(case["input"])
        assert out == case["expected"]
        assert set(out) <= ALIGN_CHARSET | set(STAR)
    elif op == "romanize_table":
        assert romanize(case["input"], case["table"]) == case["expected"]
    else:
        raise AssertionError(f"unknown golden op {op!r}")


@pytest.mark.parametrize(
    "case", golden_cases(), ids=lambda c: f"{c['op']}-{str(c.get('input'))[:24]}"
)
def test_golden(case):
    run_case(case)


def test_golden_file_is_large_enough():
    assert len(golden_cases()) >= 40


class TestNormalize:
    def test_rejects_non_strings(self):
        with pytest.raises(TypeError):
            normalize(b"bytes")

    def test_nfkc_equivalence(self):
        assert normalize("Ç") == normalize("Ç")

    @given(st.text(max_size=60))
    @settings(max_examples=200)
    def test_idempotent(self, text):
        once = normalize(text)
        assert normalize(once) == once

    @given(st.text(max_size=60))
    @settings(max_examples=100)
    def test_whitespace_discipline(self, text):
        out = normalize(text)
        assert "  " not in out
        assert out == out.strip()


class TestBrackets:
    @given(st.lists(st.text(max_size=20), max_size=30))
    def test_rate_in_unit_interval(self, verses):
        assert 0.0 <= bracket_rate(verses) <= 1.0

    def test_rate_of_empty_list(self):
        assert bracket_rate([]) == 0.0

    @given(st.text(max_size=60))
    @settings(max_examples=200)
    def test_strip_never_grows(self, text):
        assert len(strip_brackets(text)) <= len(text)


class TestStars:
    def test_starify_rejects_existing_stars(self):
        with pytest.raises(ValueError, match="star markers"):
            starify(STAR + " text")

    def test_starred_text_validates_map(self):
        with pytest.raises(ValueError):
            StarredText(text=STAR, star_map={1: "9"})
        with pytest.raises(ValueError):
            StarredText(text=f"{STAR} {STAR}", star_map={2: "9"})

    def test_starify_verses_shares_ordinals(self):
        starred, star_map = starify_verses(["verse 1 text", "and 23 more"])
        assert starred == [f"verse {STAR} text", f"and {STAR} more"]
        assert star_map == {1: "1", 2: "23"}
        labels = LabelSequence.from_verses(starred, preamble=STAR)
        ordinals = [t.star_ordinal for t in labels if t.is_star]
        assert ordinals == [0, 1, 2]

    def test_restore_with_explicit_ordinals(self):
        text = f"{STAR} verse {STAR}"
        assert restore_stars(text, (0, 2), {2: "44"}) == "verse 44"
        with pytest.raises(ValueError, match="ordinals"):
            restore_stars(text, (0,), {})

    @given(
        st.lists(
            st.one_of(
                st.text(alphabet="abc xyz", min_size=1, max_size=6),
                st.text(alphabet="0123456789", min_size=1, max_size=4),
            ),
            min_size=1,
            max_size=8,
        )
    )
    @settings(max_examples=150)
    def test_roundtrip_restores_digit_runs(self, pieces):
        text = normalize(" ".join(pieces))
        starred = starify(text)
        assert destarify_text(starred.text, starred.star_map) == text

    def test_no_digits_only_leading_star(self):
        starred = starify("plain words")
        assert starred.text == f"{STAR} plain words"
        assert starred.star_map == {}


class TestRomanize:
    @given(st.text(max_size=40))
    @settings(max_examples=200)
    def test_charset_closure(self, text):
        out = romanize(text)
        assert set(out) <= ALIGN_CHARSET | set(STAR)

    @given(st.text(max_size=40))
    @settings(max_examples=100)
    def test_idempotent(self, text):
        once = romanize(text)
        assert romanize(once) == once

    def test_table_file_round_trip(self, tmp_path):
        path = tmp_path / "table.tsv"
        path.write_text("с\ts\nт\tt\n# comment\nо\to\nп\tp\n", encoding="utf-8")
        table = load_romanization_table(path)
        assert romanize("стоп", table) == "stop"

    def test_malformed_table_rejected(self, tmp_path):
        path = tmp_path / "bad.tsv"
        path.write_text("nocolumn\n", encoding="utf-8")
        with pytest.raises(ValueError, match="source<TAB>replacement"):
            load_romanization_table(path)
        path.write_text("с\tS!\n", encoding="utf-8")
        with pytest.raises(ValueError, match="charset"):
            load_romanization_table(path)
        path.write_text("с\ts\nс\tz\n", encoding="utf-8")
        with pytest.raises(ValueError, match="duplicate"):
            load_romanization_table(path)
        path.write_text("", encoding="utf-8")
        with pytest.raises(ValueError, match="empty"):
            load_romanization_table(path)

    def test_longest_match_wins(self):
        assert romanize("chic", {"ch": "k", "c": "s"}) == "kis"

    def test_drop_counting_logged(self, caplog):
        with caplog.at_level("WARNING"):
            assert romanize("ab世界cd") == "abcd"
        assert "dropped 2" in caplog.text
