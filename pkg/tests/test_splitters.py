import random
import re
import string

import pytest

from groupdesk.splitters import split_chars, split_hybrid, split_markdown
from groupdesk.tokens import count_tokens


def _bodies(chunks) -> list[str]:
    return [c.body for c in chunks]


def _spans(chunks) -> list[tuple[int, int]]:
    return [c.char_span for c in chunks]


# ── markdown sections ────────────────────────────────────────────────────


def test_markdown_two_headers() -> None:
    chunks = split_markdown("# A\nx\n## B\ny")
    assert [c.header_path for c in chunks] == [["A"], ["A", "B"]]
    assert _bodies(chunks) == ["x", "y"]


def test_markdown_no_headers_is_single_chunk() -> None:
    chunks = split_markdown("plain text\nwith two lines")
    assert len(chunks) == 1
    assert chunks[0].header_path == []
    assert chunks[0].body == "plain text\nwith two lines"


def test_markdown_empty_text() -> None:
    assert split_markdown("") == []


def test_markdown_header_stack_pops_on_same_level() -> None:
    chunks = split_markdown("# A\nx\n## B\ny\n## C\nz\n# D\nw")
    assert [c.header_path for c in chunks] == [["A"], ["A", "B"], ["A", "C"], ["D"]]
    assert _bodies(chunks) == ["x", "y", "z", "w"]


def test_markdown_text_before_first_header() -> None:
    chunks = split_markdown("intro\n# A\nbody")
    assert [c.header_path for c in chunks] == [[], ["A"]]
    assert _bodies(chunks) == ["intro", "body"]


def test_markdown_headers_never_in_bodies() -> None:
    chunks = split_markdown("# A\nx\n## B\ny")
    for c in chunks:
        assert "#" not in c.body


def test_markdown_body_matches_char_span() -> None:
    text = "# A\nfirst section\nmore\n## B\nsecond"
    for c in split_markdown(text):
        start, end = c.char_span
        assert text[start:end] == c.body
        assert c.token_count == count_tokens(c.body)


def test_markdown_max_chars_must_be_positive() -> None:
    with pytest.raises(ValueError):
        split_markdown("x", 0)


def _sections_by_regex(text: str) -> list[str]:
    """Independent section extractor: split on header lines, keep bodies."""
    parts = re.split(r"(?m)^#.*$\n?", text)
    out = []
    for part in parts:
        body = part[:-1] if part.endswith("\n") else part
        if body:
            out.append(body)
    return out


def test_markdown_bodies_match_independent_extractor() -> None:
    rng = random.Random(11)
    words = ["alpha", "beta", "gamma", "delta", "install", "check"]
    for _ in range(50):
        lines = []
        for _ in range(rng.randrange(1, 15)):
            if rng.random() < 0.3:
                lines.append("#" * rng.randrange(1, 4) + " " + rng.choice(words))
            else:
                lines.append(" ".join(rng.choices(words, k=rng.randrange(1, 5))))
        text = "\n".join(lines)
        assert _bodies(split_markdown(text)) == _sections_by_regex(text)


def test_markdown_reconstruction_minus_header_lines() -> None:
    # For documents whose sections are all non-blank and that lack a final
    # newline, joining bodies with "\n" rebuilds the header-stripped text.
    text = "# A\nx1\nx2\n## B\ny\n# C\nz"
    stripped = "".join(
        line for line in text.splitlines(keepends=True) if not line.startswith("#")
    )
    assert "\n".join(_bodies(split_markdown(text))) == stripped


# ── character windows ────────────────────────────────────────────────────


def test_chars_no_overlap_sizes() -> None:
    chunks = split_chars("abcdefghij", 4, 0)
    assert [len(c.body) for c in chunks] == [4, 4, 2]
    assert _spans(chunks) == [(0, 4), (4, 8), (8, 10)]


def test_chars_overlap_spans() -> None:
    chunks = split_chars("abcdefghij", 4, 2)
    assert _spans(chunks) == [(0, 4), (2, 6), (4, 8), (6, 10)]


def test_chars_short_text_single_chunk() -> None:
    chunks = split_chars("abc", 10, 3)
    assert _spans(chunks) == [(0, 3)]


def test_chars_empty_text() -> None:
    assert split_chars("", 4, 0) == []


def test_chars_overlap_bounds() -> None:
    with pytest.raises(ValueError):
        split_chars("abc", 4, 4)
    with pytest.raises(ValueError):
        split_chars("abc", 4, -1)


def test_chars_windows_cover_text_exactly() -> None:
    rng = random.Random(3)
    for _ in range(100):
        n = rng.randrange(0, 200)
        text = "".join(rng.choices(string.ascii_lowercase, k=n))
        max_chars = rng.randrange(1, 20)
        overlap = rng.randrange(0, max_chars)
        chunks = split_chars(text, max_chars, overlap)
        if not text:
            assert chunks == []
            continue
        # Full coverage: first span starts at 0, last ends at len(text),
        # consecutive spans abut or overlap by exactly `overlap` chars
        # except a clipped final window.
        assert chunks[0].char_span[0] == 0
        assert chunks[-1].char_span[1] == n
        for a, b in zip(chunks, chunks[1:]):
            assert b.char_span[0] == a.char_span[0] + max_chars - overlap
        for c in chunks:
            assert text[c.char_span[0] : c.char_span[1]] == c.body


def test_chars_disjoint_ordered_when_no_overlap() -> None:
    chunks = split_chars("abcdefghijklmno", 4, 0)
    for a, b in zip(chunks, chunks[1:]):
        assert a.char_span[1] == b.char_span[0]


# ── hybrid ───────────────────────────────────────────────────────────────


def test_hybrid_oversized_section_inherits_header_path() -> None:
    text = "# A\n" + "x" * 20
    chunks = split_hybrid(text, 8, 2)
    assert len(chunks) > 1
    assert all(c.header_path == ["A"] for c in chunks)
    for c in chunks:
        assert text[c.char_span[0] : c.char_span[1]] == c.body


def test_hybrid_small_sections_equal_markdown() -> None:
    text = "# A\nshort\n## B\nalso short"
    assert split_hybrid(text, 100, 10) == split_markdown(text, 100)


def test_hybrid_headerless_equals_chars() -> None:
    text = "z" * 50
    assert split_hybrid(text, 8, 2) == split_chars(text, 8, 2)


def test_hybrid_reconstruction_with_no_overlap() -> None:
    text = "# A\n" + "abcdef" * 10 + "\n## B\nshort"
    chunks = split_hybrid(text, 16, 0)
    for a, b in zip(chunks, chunks[1:]):
        assert a.char_span[1] <= b.char_span[0]
    rebuilt = "".join(c.body for c in chunks)
    stripped_sections = _sections_by_regex(text)
    assert rebuilt == "".join(stripped_sections)


def test_chunk_ids_sort_in_positional_order() -> None:
    chunks = split_chars("abcdefghij" * 30, 7, 0)
    ids = [c.chunk_id for c in chunks]
    assert ids == sorted(ids)
