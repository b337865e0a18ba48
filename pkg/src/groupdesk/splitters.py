"""Document splitting strategies for the feature store.

Three ways to cut a document into chunks:

* ``split_markdown`` — header-aware sections; each chunk knows the stack of
  headers enclosing it, and header lines themselves never land in a body.
* ``split_chars`` — fixed-size character windows with configurable overlap.
* ``split_hybrid`` — markdown sections first, oversized sections re-split
  into character windows that inherit the section's header path.

Chunk ids embed the zero-padded character span so that lexicographic order
equals positional order within a document.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .tokens import count_tokens

DEFAULT_MAX_CHARS = 768
DEFAULT_OVERLAP = 32

_HEADER_RE = re.compile(r"^(#+)\s*(.*?)\s*$")


@dataclass
class Chunk:
    chunk_id: str
    doc_id: str
    header_path: list[str]
    body: str
    char_span: tuple[int, int]
    token_count: int


def _chunk_id(doc_id: str, start: int, end: int) -> str:
    span = f"{start:08d}-{end:08d}"
    return f"{doc_id}:{span}" if doc_id else span


def _make_chunk(doc_id: str, header_path: list[str], body: str, start: int) -> Chunk:
    span = (start, start + len(body))
    return Chunk(
        chunk_id=_chunk_id(doc_id, *span),
        doc_id=doc_id,
        header_path=list(header_path),
        body=body,
        char_span=span,
        token_count=count_tokens(body),
    )


def split_markdown(text: str, max_chars: int = DEFAULT_MAX_CHARS, *, doc_id: str = "") -> list[Chunk]:
    """Split at lines beginning with ``#``.

    A section's body is the raw text between headers with one trailing
    newline trimmed; empty sections produce no chunk. ``max_chars`` is
    validated but sections are never re-split here (see ``split_hybrid``).
    """
    if max_chars <= 0:
        raise ValueError("max_chars must be positive")
    chunks: list[Chunk] = []
    stack: list[tuple[int, str]] = []
    sec_start: int | None = None
    pos = 0

    def flush(end: int) -> None:
        nonlocal sec_start
        if sec_start is None:
            return
        raw = text[sec_start:end]
        body = raw[:-1] if raw.endswith("\n") else raw
        if body:
            chunks.append(_make_chunk(doc_id, [t for _, t in stack], body, sec_start))
        sec_start = None

    for line in text.splitlines(keepends=True):
        header = _HEADER_RE.match(line.rstrip("\n"))
        if header:
            flush(pos)
            level = len(header.group(1))
            while stack and stack[-1][0] >= level:
                stack.pop()
            stack.append((level, header.group(2)))
        elif sec_start is None:
            sec_start = pos
        pos += len(line)
    flush(len(text))
    return chunks


def split_chars(
    text: str,
    max_chars: int = DEFAULT_MAX_CHARS,
    overlap: int = DEFAULT_OVERLAP,
    *,
    doc_id: str = "",
    base_offset: int = 0,
    header_path: list[str] | None = None,
) -> list[Chunk]:
    """Fixed character windows; consecutive windows share ``overlap`` chars.

    Emission stops with the first window that reaches the end of the text,
    so a trailing window fully contained in the previous one never appears.
    """
    if max_chars <= 0:
        raise ValueError("max_chars must be positive")
    if not 0 <= overlap < max_chars:
        raise ValueError("overlap must satisfy 0 <= overlap < max_chars")
    n = len(text)
    chunks: list[Chunk] = []
    start = 0
    while start < n:
        end = min(start + max_chars, n)
        chunk = _make_chunk(doc_id, header_path or [], text[start:end], base_offset + start)
        chunks.append(chunk)
        if end >= n:
            break
        start += max_chars - overlap
    return chunks


def split_hybrid(
    text: str,
    max_chars: int = DEFAULT_MAX_CHARS,
    overlap: int = DEFAULT_OVERLAP,
    *,
    doc_id: str = "",
) -> list[Chunk]:
    """Markdown sections, with oversized section bodies re-split by chars."""
    out: list[Chunk] = []
    for section in split_markdown(text, max_chars, doc_id=doc_id):
        if len(section.body) <= max_chars:
            out.append(section)
        else:
            out.extend(
                split_chars(
                    section.body,
                    max_chars,
                    overlap,
                    doc_id=doc_id,
                    base_offset=section.char_span[0],
                    header_path=section.header_path,
                )
            )
    return out


SPLITTER_NAMES = ("markdown", "chars", "hybrid")


def split(name: str, text: str, max_chars: int, overlap: int, *, doc_id: str = "") -> list[Chunk]:
    if name == "markdown":
        return split_markdown(text, max_chars, doc_id=doc_id)
    if name == "chars":
        return split_chars(text, max_chars, overlap, doc_id=doc_id)
    if name == "hybrid":
        return split_hybrid(text, max_chars, overlap, doc_id=doc_id)
    raise ValueError(f"unknown splitter: {name!r}")
