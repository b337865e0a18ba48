"""Background-context construction for answer generation.

A query fans out into keyword phrases, each phrase searches the response
store, an LLM reranks the snippet candidates, and survivors are expanded
back to their full source documents. Optionally a per-group repository
checkout is searched for identifiers, and a pluggable web client
contributes moderated, relevance-filtered pages. Everything funnels into
one token-budgeted bundle packed greedily by source priority and
relevance.

All operations here are read-only; the module holds no mutable state.
"""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol, Sequence
from urllib.parse import urlparse

import httpx

from . import prompts

from .errors import (
    BackendUnavailable,
    ContextOverflow,
    EmbeddingUnavailable,
    ModerationUnavailable,
    NoCapableBackend,
    PagingDisabled,
    RepoUnavailable,
    SourceMissing,
    UnscorableResponse,
)
from .feature_store import FeatureStore
from .llm import LlmGateway, user_request
from .splitters import Chunk
from .tokens import DEFAULT_COUNTER, TokenCounter

logger = logging.getLogger(__name__)

SOURCE_KNOWLEDGE = "knowledge"
SOURCE_REPO = "repo"
SOURCE_WEB = "web"
SOURCES = (SOURCE_KNOWLEDGE, SOURCE_REPO, SOURCE_WEB)

DEFAULT_PRIORITY = SOURCES
DEFAULT_THETA_REL = 5
DEFAULT_MAX_RERANK = 12
DEFAULT_KNOWLEDGE_K = 6
DEFAULT_MAX_WEB_RESULTS = 6
DEFAULT_WEB_TIMEOUT = 10.0
DEFAULT_BUDGET_TOKENS = 16000
DEFAULT_RESERVE_TOKENS = 2000
LONG_BUDGET_TOKENS = 32000
# desk-scale caps, not part of any wire contract
DEFAULT_MAX_PIECE_TOKENS = 4000
DEFAULT_MAX_REPO_PIECES = 6
DOMAIN_BOOST = 2
_REPO_LINE_CAP = 30
_REPO_FILE_BYTE_CAP = 1_000_000

REPO_SUFFIXES = (
    ".py", ".md", ".markdown", ".txt", ".rst", ".toml", ".cfg", ".ini",
    ".json", ".yaml", ".yml", ".ts", ".tsx", ".js", ".sh", ".c", ".h",
    ".cpp", ".hpp", ".cu", ".cmake",
)

_STOPWORDS = frozenset(
    "a an and are at by can could do does for from hello hi how i in is it "
    "me my of on or our please should that the this to us we what when where "
    "which who why will with would you your thanks".split()
)

_GATEWAY_ERRORS = (BackendUnavailable, NoCapableBackend, ContextOverflow)


@dataclass(frozen=True)
class ContextPiece:
    source: str
    title: str
    text: str
    tokens: int
    relevance: int
    origin: str

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if not 0 <= self.relevance <= 10:
            raise ValueError(f"relevance {self.relevance} outside [0, 10]")
        if self.tokens < 0:
            raise ValueError("tokens must be non-negative")


@dataclass(frozen=True)
class ContextBundle:
    pieces: tuple[ContextPiece, ...]
    total_tokens: int
    citations: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.total_tokens != sum(p.tokens for p in self.pieces):
            raise ValueError("total_tokens does not match the packed pieces")


@dataclass(frozen=True)
class RepoRoute:
    group_id: str
    repo_name: str
    search_root: str
    doc_domains: tuple[str, ...] = ()


@dataclass(frozen=True)
class WebResult:
    url: str
    snippet: str
    fetched_text: str
    safe: bool
    relevance: int = 5


class WebSearchClient(Protocol):
    def search(self, query: str) -> list[dict]: ...

    def fetch(self, url: str) -> str: ...


class HttpWebSearch:
    """GET `endpoint?q=...` -> {"results": [{"url","snippet"}]}; GET url -> page text."""

    def __init__(self, endpoint: str, client: httpx.Client | None = None, timeout: float = DEFAULT_WEB_TIMEOUT) -> None:
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout, follow_redirects=True)

    def search(self, query: str) -> list[dict]:
        resp = self._client.get(self.endpoint, params={"q": query})
        resp.raise_for_status()
        results = resp.json()["results"]
        if not isinstance(results, list):
            raise ValueError(f"malformed search payload: {results!r}")
        return results

    def fetch(self, url: str) -> str:
        resp = self._client.get(url)
        resp.raise_for_status()
        return resp.text


def truncate_to_tokens(text: str, max_tokens: int, counter: TokenCounter = DEFAULT_COUNTER) -> str:
    """Longest prefix whose token count stays within max_tokens."""
    if max_tokens <= 0:
        return ""
    max_chars = math.floor(max_tokens * counter.chars_per_token + 1e-9)
    return text[:max_chars]


def assemble_context(
    pieces: Sequence[ContextPiece],
    budget_tokens: int = DEFAULT_BUDGET_TOKENS,
    *,
    reserve_tokens: int = DEFAULT_RESERVE_TOKENS,
    priority: Sequence[str] = DEFAULT_PRIORITY,
    counter: TokenCounter = DEFAULT_COUNTER,
) -> ContextBundle:
    """Greedy packing in (source priority, relevance desc) order.

    A piece that would overflow budget - reserve is skipped and packing
    continues with the next one; nothing is ever cut mid-piece, except
    that when nothing fits at all the best knowledge piece is truncated
    to fit rather than answering from an empty bundle.
    """
    if budget_tokens <= reserve_tokens:
        raise ValueError("budget_tokens must exceed reserve_tokens")
    limit = budget_tokens - reserve_tokens

    def rank(piece: ContextPiece) -> tuple:
        pri = priority.index(piece.source) if piece.source in priority else len(priority)
        return (pri, -piece.relevance, piece.origin, piece.title)

    ordered = sorted(pieces, key=rank)
    packed: list[ContextPiece] = []
    total = 0
    for piece in ordered:
        if total + piece.tokens <= limit:
            packed.append(piece)
            total += piece.tokens
    if not packed:
        for piece in ordered:
            if piece.source != SOURCE_KNOWLEDGE:
                continue
            text = truncate_to_tokens(piece.text, limit, counter)
            if not text:
                break
            cut = ContextPiece(
                source=piece.source,
                title=piece.title + " (truncated)",
                text=text,
                tokens=counter.count(text),
                relevance=piece.relevance,
                origin=piece.origin,
            )
            packed, total = [cut], cut.tokens
            break
    citations: list[str] = []
    for piece in packed:
        if piece.origin not in citations:
            citations.append(piece.origin)
    return ContextBundle(pieces=tuple(packed), total_tokens=total, citations=tuple(citations))


def _identifier_needles(keywords: Sequence[str]) -> list[str]:
    """Lowercased literal plus snake/camel spellings of each phrase."""
    needles: set[str] = set()
    for phrase in keywords:
        words = phrase.lower().split()
        if not words:
            continue
        needles.add(" ".join(words))
        if len(words) > 1:
            needles.add("_".join(words))
            needles.add("".join(words))
    return sorted(needles)


class Retriever:
    def __init__(
        self,
        store: FeatureStore,
        gateway: LlmGateway,
        *,
        routes: Mapping[str, RepoRoute] | None = None,
        web_client: WebSearchClient | None = None,
        moderation=None,
        theta_rel: int = DEFAULT_THETA_REL,
        max_rerank: int = DEFAULT_MAX_RERANK,
        knowledge_k: int = DEFAULT_KNOWLEDGE_K,
        max_web_results: int = DEFAULT_MAX_WEB_RESULTS,
        max_piece_tokens: int = DEFAULT_MAX_PIECE_TOKENS,
        max_repo_pieces: int = DEFAULT_MAX_REPO_PIECES,
        paging_enabled: bool = False,
        counter: TokenCounter = DEFAULT_COUNTER,
    ) -> None:
        if not 0 <= theta_rel <= 10:
            raise ValueError("theta_rel must lie in [0, 10]")
        self.store = store
        self.gateway = gateway
        self.routes = dict(routes or {})
        self.web_client = web_client
        self.moderation = moderation
        self.theta_rel = theta_rel
        self.max_rerank = max_rerank
        self.knowledge_k = knowledge_k
        self.max_web_results = max_web_results
        self.max_piece_tokens = max_piece_tokens
        self.max_repo_pieces = max_repo_pieces
        self.paging_enabled = paging_enabled
        self.counter = counter

    # ── keyword extraction ───────────────────────────────────────────────

    def extract_keywords(self, query: str) -> list[str]:
        """LLM phrase extraction with a total, deterministic fallback."""
        if not query:
            raise ValueError("query is empty")
        try:
            reply, _ = self.gateway.generate(user_request(self._prompt("extract_keywords", query)))
        except _GATEWAY_ERRORS as exc:
            logger.warning("keyword extraction falling back: %s", exc)
            return self.fallback_keywords(query)
        phrases: list[str] = []
        for line in reply.splitlines():
            for part in re.split(r"[,;]", line):
                phrase = part.strip().strip("-*•").strip().strip("\"'")
                phrase = re.sub(r"^\d+[.)]\s*", "", phrase)
                if phrase and phrase not in phrases:
                    phrases.append(phrase)
        return phrases[:8] if phrases else self.fallback_keywords(query)

    @staticmethod
    def fallback_keywords(query: str) -> list[str]:
        tokens = [t for t in query.split() if t.strip() and t.lower().strip("?.,!:;") not in _STOPWORDS]
        tokens = [t.strip("?.,!:;") for t in tokens]
        tokens = [t for t in tokens if t]
        return tokens if tokens else [query]

    # ── knowledge store ──────────────────────────────────────────────────

    def knowledge_search(self, keywords: Sequence[str], k: int | None = None) -> list[tuple[Chunk, float]]:
        """Union of per-phrase top-k hits, deduped by chunk keeping max similarity."""
        k = k if k is not None else self.knowledge_k
        best: dict[str, tuple[Chunk, float]] = {}
        for phrase in keywords:
            try:
                hits = self.store.search_text(phrase, k)
            except EmbeddingUnavailable as exc:
                logger.warning("knowledge search skipped: %s", exc)
                return []
            for hit in hits:
                prior = best.get(hit.chunk_id)
                if prior is None or hit.similarity > prior[1]:
                    best[hit.chunk_id] = (hit.chunk, hit.similarity)
        ranked = sorted(best.values(), key=lambda pair: (-pair[1], pair[0].chunk_id))
        return ranked

    def _rerank_scored(self, query: str, candidates: Sequence[tuple[Chunk, float]]) -> list[tuple[Chunk, int]]:
        if len(candidates) > self.max_rerank:
            raise ValueError(f"{len(candidates)} candidates exceed max_rerank {self.max_rerank}")
        kept: list[tuple[Chunk, int]] = []
        for chunk, _sim in candidates:
            try:
                result = self.gateway.score("doc_relevance", query=query, document=chunk.body)
            except UnscorableResponse as exc:
                logger.warning("dropping unscorable candidate %s: %s", chunk.chunk_id, exc)
                continue
            if result.value >= self.theta_rel:
                kept.append((chunk, result.value))
        kept.sort(key=lambda pair: (-pair[1], pair[0].chunk_id))
        return kept

    def rerank_by_llm(self, query: str, candidates: Sequence[tuple[Chunk, float]]) -> list[ContextPiece]:
        pieces = []
        for chunk, score in self._rerank_scored(query, candidates):
            title = " > ".join(chunk.header_path) if chunk.header_path else chunk.body[:50]
            pieces.append(self._piece(SOURCE_KNOWLEDGE, title, chunk.body, score, chunk.chunk_id))
        return pieces

    def fetch_source(self, chunk: Chunk, relevance: int = DEFAULT_THETA_REL) -> ContextPiece:
        """Expand a snippet hit back to its whole originating document."""
        record = self.store.get_document(chunk.doc_id)
        if record is None:
            raise SourceMissing(f"document {chunk.doc_id} is gone")
        title = record.source_path or chunk.doc_id[:12]
        origin = record.source_path or chunk.doc_id
        return self._piece(SOURCE_KNOWLEDGE, title, record.full_text, relevance, origin)

    def knowledge_pieces(self, query: str, keywords: Sequence[str]) -> list[ContextPiece]:
        """search -> rerank -> full-document expansion, one piece per document."""
        hits = self.knowledge_search(keywords)[: self.max_rerank]
        pieces: list[ContextPiece] = []
        seen_docs: set[str] = set()
        for chunk, score in self._rerank_scored(query, hits):
            if chunk.doc_id in seen_docs:
                continue
            seen_docs.add(chunk.doc_id)
            try:
                pieces.append(self.fetch_source(chunk, relevance=score))
            except SourceMissing as exc:
                logger.warning("skipping vanished source: %s", exc)
        return pieces

    # ── web ──────────────────────────────────────────────────────────────

    def web_search(self, keywords: Sequence[str], max_results: int | None = None) -> list[WebResult]:
        """Search, fetch, moderate, then LLM-filter. Web evidence is optional:
        a dead client yields an empty list, an unreachable page is dropped,
        and a moderation failure marks the page unsafe rather than passing it.
        """
        if self.web_client is None:
            return []
        max_results = max_results if max_results is not None else self.max_web_results
        query = " ".join(keywords)
        try:
            raw = self.web_client.search(query)
        except Exception as exc:
            logger.warning("web search unavailable: %s", exc)
            return []
        results: list[WebResult] = []
        for entry in raw[:max_results]:
            url = entry.get("url", "")
            snippet = entry.get("snippet", "")
            if not url:
                continue
            try:
                text = self.web_client.fetch(url)
            except Exception as exc:
                logger.warning("dropping unreachable page %s: %s", url, exc)
                continue
            safe = True
            if self.moderation is not None:
                try:
                    safe = not self.moderation.flagged(text)
                except ModerationUnavailable as exc:
                    logger.warning("moderation down, marking %s unsafe: %s", url, exc)
                    safe = False
            if not safe:
                results.append(WebResult(url, snippet, text, safe=False, relevance=0))
                continue
            try:
                score = self.gateway.score("doc_relevance", query=query, document=snippet or text[:500])
            except UnscorableResponse as exc:
                logger.warning("dropping unscorable page %s: %s", url, exc)
                continue
            if score.value >= self.theta_rel:
                results.append(WebResult(url, snippet, text, safe=True, relevance=score.value))
        return results

    def web_pieces(self, results: Sequence[WebResult], route: RepoRoute | None = None) -> list[ContextPiece]:
        """Safe results become pieces; whitelisted doc domains get a boost."""
        domains = route.doc_domains if route else ()
        pieces = []
        for result in results:
            if not result.safe:
                continue
            relevance = result.relevance
            host = urlparse(result.url).netloc
            if any(host == d or host.endswith("." + d) for d in domains):
                relevance = min(10, relevance + DOMAIN_BOOST)
            title = result.snippet[:80] if result.snippet else result.url
            pieces.append(self._piece(SOURCE_WEB, title, result.fetched_text, relevance, result.url))
        return pieces

    # ── repository ───────────────────────────────────────────────────────

    def route_repo(self, group_id: str) -> RepoRoute | None:
        return self.routes.get(group_id)

    def repo_search(self, route: RepoRoute, keywords: Sequence[str]) -> list[ContextPiece]:
        """Literal and identifier-aware line search over a local checkout."""
        root = Path(route.search_root)
        if not root.is_dir():
            raise RepoUnavailable(f"search root {route.search_root!r} is not a directory")
        needles = _identifier_needles(keywords)
        if not needles:
            return []
        matches: list[tuple[Path, list[tuple[int, str]]]] = []
        for path in sorted(root.rglob("*")):
            if not path.is_file() or path.suffix not in REPO_SUFFIXES:
                continue
            try:
                if path.stat().st_size > _REPO_FILE_BYTE_CAP:
                    continue
                text = path.read_text(encoding="utf-8")
            except (OSError, UnicodeDecodeError):
                continue
            lines = [
                (num, line)
                for num, line in enumerate(text.splitlines(), start=1)
                if any(n in line.lower() for n in needles)
            ]
            if lines:
                matches.append((path, lines))
        matches.sort(key=lambda item: (-len(item[1]), str(item[0])))
        pieces = []
        for path, lines in matches[: self.max_repo_pieces]:
            excerpt = "\n".join(f"L{num}: {line}" for num, line in lines[:_REPO_LINE_CAP])
            rel = path.relative_to(root)
            pieces.append(self._piece(SOURCE_REPO, f"{route.repo_name}/{rel}", excerpt, 5, str(path)))
        return pieces

    # ── paging (optional, default off) ───────────────────────────────────

    def paging_summarize(self, route: RepoRoute) -> dict[str, str]:
        """One-line description per python module under the route's root."""
        if not self.paging_enabled:
            raise PagingDisabled("paging is switched off")
        root = Path(route.search_root)
        if not root.is_dir():
            raise RepoUnavailable(f"search root {route.search_root!r} is not a directory")
        summaries: dict[str, str] = {}
        for path in sorted(root.rglob("*.py")):
            name = ".".join(path.relative_to(root).with_suffix("").parts)
            source = truncate_to_tokens(path.read_text(encoding="utf-8"), self.max_piece_tokens, self.counter)
            try:
                description, _ = self.gateway.generate(
                    user_request(self._prompt("module_summary", name=name, source=source))
                )
            except _GATEWAY_ERRORS as exc:
                logger.warning("module %s left unsummarized: %s", name, exc)
                description = "(no description)"
            summaries[name] = description.strip()
        return summaries

    def paging_query(self, query: str, summaries: Mapping[str, str], route: RepoRoute) -> list[ContextPiece]:
        """Ask the LLM which modules to open; any selection failure falls
        back to the plain repository search."""
        if not self.paging_enabled:
            raise PagingDisabled("paging is switched off")
        listing = "\n".join(f"{name}: {summaries[name]}" for name in sorted(summaries))

        def fallback() -> list[ContextPiece]:
            return self.repo_search(route, self.fallback_keywords(query))
        try:
            reply, _ = self.gateway.generate(
                user_request(self._prompt("module_select", query=query, listing=listing))
            )
        except _GATEWAY_ERRORS as exc:
            logger.warning("module selection failed, using plain search: %s", exc)
            return fallback()
        selected: list[str] = []
        for line in reply.splitlines():
            name = line.strip().strip("-*•").strip()
            if not name:
                continue
            if name not in summaries:
                logger.warning("selector named unknown module %r, using plain search", name)
                return fallback()
            if name not in selected:
                selected.append(name)
        if not selected:
            return fallback()
        root = Path(route.search_root)
        pieces = []
        for name in selected:
            path = root / (name.replace(".", "/") + ".py")
            try:
                source = path.read_text(encoding="utf-8")
            except OSError:
                logger.warning("selected module %s unreadable, using plain search", name)
                return fallback()
            pieces.append(self._piece(SOURCE_REPO, name, source, 5, str(path)))
        return pieces

    # ── assembly + helpers ───────────────────────────────────────────────

    def assemble(
        self,
        pieces: Sequence[ContextPiece],
        budget_tokens: int = DEFAULT_BUDGET_TOKENS,
        reserve_tokens: int = DEFAULT_RESERVE_TOKENS,
        priority: Sequence[str] = DEFAULT_PRIORITY,
    ) -> ContextBundle:
        return assemble_context(
            pieces, budget_tokens, reserve_tokens=reserve_tokens, priority=priority, counter=self.counter
        )

    def _piece(self, source: str, title: str, text: str, relevance: int, origin: str) -> ContextPiece:
        capped = truncate_to_tokens(text, self.max_piece_tokens, self.counter)
        if len(capped) < len(text):
            title = title + " (truncated)"
            text = capped
        return ContextPiece(
            source=source,
            title=title,
            text=text,
            tokens=self.counter.count(text),
            relevance=relevance,
            origin=origin,
        )

    def _prompt(self, template_id: str, *args: str, **kwargs: str) -> str:
        return prompts.render_template(template_id, *args, directory=self.gateway.template_dir, **kwargs)
