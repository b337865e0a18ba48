import random
from pathlib import Path

import pytest

from groupdesk import prompts
from groupdesk.embedding import MockEmbedder
from groupdesk.errors import EmbeddingUnavailable, PagingDisabled, RepoUnavailable, SourceMissing
from groupdesk.feature_store import FeatureStore, make_document
from groupdesk.llm import BackendProfile, LlmGateway, ScriptedChatBackend, request_fingerprint, user_request
from groupdesk.moderation import ScriptedModeration
from groupdesk.retrieval import (
    DEFAULT_PRIORITY,
    ContextBundle,
    ContextPiece,
    RepoRoute,
    Retriever,
    WebResult,
    assemble_context,
    truncate_to_tokens,
)
from groupdesk.splitters import Chunk
from groupdesk.tokens import count_tokens


def _fp(template_id: str, *args: str, **kwargs: str) -> str:
    prompt = prompts.render_template(template_id, *args, **kwargs)
    return request_fingerprint(user_request(prompt))


def _gateway(fixture) -> LlmGateway:
    profile = BackendProfile(
        name="lab", endpoint="scripted:", max_tokens=64000,
        capabilities=frozenset({"scoring", "generation"}), cost_rank=1,
    )
    return LlmGateway([profile], {profile.name: ScriptedChatBackend(fixture)}, sleep=lambda s: None)


def _store(texts, dim=64) -> FeatureStore:
    store = FeatureStore(MockEmbedder(dim=dim))
    for i, text in enumerate(texts):
        store.add_document(make_document(text, source_path=f"doc{i}.md"))
    return store


def _retriever(texts=(), fixture=None, **kw) -> Retriever:
    fixture = fixture if fixture is not None else {"*": "5"}
    return Retriever(_store(texts), _gateway(fixture), **kw)


def _tok_text(tokens: int) -> str:
    return "x" * int(tokens * 3.5)


def _mk(source: str, tokens: int, rel: int, origin: str | None = None) -> ContextPiece:
    text = _tok_text(tokens)
    return ContextPiece(
        source=source, title=f"{source}-{tokens}-{rel}", text=text,
        tokens=count_tokens(text), relevance=rel,
        origin=origin or f"{source}://{tokens}/{rel}",
    )


# ── piece and bundle validation ──────────────────────────────────────────


def test_piece_rejects_unknown_source() -> None:
    with pytest.raises(ValueError):
        _mk("wiki", 10, 5)


def test_piece_rejects_out_of_range_relevance() -> None:
    with pytest.raises(ValueError):
        _mk("web", 10, 11)


def test_bundle_rejects_wrong_total() -> None:
    piece = _mk("knowledge", 10, 5)
    with pytest.raises(ValueError):
        ContextBundle(pieces=(piece,), total_tokens=piece.tokens + 1, citations=())


# ── truncation ───────────────────────────────────────────────────────────


def test_truncate_respects_token_bound_and_is_maximal() -> None:
    text = "y" * 1000
    for max_tokens in (1, 7, 10, 100, 285, 286, 1000):
        cut = truncate_to_tokens(text, max_tokens)
        assert count_tokens(cut) <= max_tokens
        if len(cut) < len(text):
            assert count_tokens(text[: len(cut) + 1]) > max_tokens


def test_truncate_zero_budget_empty() -> None:
    assert truncate_to_tokens("abc", 0) == ""


# ── assembly ─────────────────────────────────────────────────────────────


def test_assembly_packs_by_priority_and_drops_overflow() -> None:
    pieces = [_mk("web", 4000, 9), _mk("repo", 6000, 9), _mk("knowledge", 8000, 9)]
    bundle = assemble_context(pieces, 14000, reserve_tokens=0)
    assert [p.source for p in bundle.pieces] == ["knowledge", "repo"]
    assert bundle.total_tokens == 14000


def test_assembly_empty_input() -> None:
    bundle = assemble_context([], 14000, reserve_tokens=0)
    assert bundle.pieces == ()
    assert bundle.total_tokens == 0
    assert bundle.citations == ()


def test_assembly_skip_then_continue() -> None:
    pieces = [_mk("knowledge", 9000, 9), _mk("knowledge", 5000, 8), _mk("knowledge", 2000, 7)]
    bundle = assemble_context(pieces, 12000, reserve_tokens=0)
    assert [p.tokens for p in bundle.pieces] == [9000, 2000]


def test_assembly_truncates_lone_oversized_knowledge_piece() -> None:
    piece = _mk("knowledge", 20000, 9)
    bundle = assemble_context([piece], 14000, reserve_tokens=0)
    assert len(bundle.pieces) == 1
    only = bundle.pieces[0]
    assert only.tokens <= 14000
    assert only.title.endswith("(truncated)")
    assert bundle.total_tokens == only.tokens


def test_assembly_never_truncates_repo_or_web() -> None:
    bundle = assemble_context([_mk("web", 20000, 9), _mk("repo", 20000, 9)], 14000, reserve_tokens=0)
    assert bundle.pieces == ()


def test_assembly_requires_headroom() -> None:
    with pytest.raises(ValueError):
        assemble_context([], 2000, reserve_tokens=2000)


def test_assembly_citations_deduped_in_order() -> None:
    pieces = [
        _mk("knowledge", 10, 9, origin="a.md"),
        _mk("knowledge", 10, 8, origin="b.md"),
        _mk("knowledge", 10, 7, origin="a.md"),
    ]
    bundle = assemble_context(pieces, 1000, reserve_tokens=0)
    assert bundle.citations == ("a.md", "b.md")


def test_assembly_property_budget_and_ordering() -> None:
    rng = random.Random(777)
    for _ in range(200):
        pieces = [
            _mk(rng.choice(DEFAULT_PRIORITY), rng.randint(10, 20000), rng.randint(0, 10),
                origin=f"o{rng.randrange(10**6)}")
            for _ in range(rng.randint(1, 40))
        ]
        budget = rng.randint(3000, 40000)
        reserve = rng.randint(0, 2000)
        bundle = assemble_context(pieces, budget, reserve_tokens=reserve)
        assert bundle.total_tokens <= budget - reserve
        ranks = [DEFAULT_PRIORITY.index(p.source) for p in bundle.pieces]
        assert ranks == sorted(ranks)
        for source in DEFAULT_PRIORITY:
            rels = [p.relevance for p in bundle.pieces if p.source == source]
            assert rels == sorted(rels, reverse=True)


# ── keyword extraction ───────────────────────────────────────────────────


def test_extract_keywords_scripted_decomposition() -> None:
    query = "How to install mmdet and mmcv"
    fixture = {_fp("extract_keywords", query): "install mmdet\ninstall mmcv"}
    rtv = _retriever(fixture=fixture)
    assert rtv.extract_keywords(query) == ["install mmdet", "install mmcv"]


def test_extract_keywords_parses_bullets_and_commas() -> None:
    query = "quantize and deploy the detector"
    fixture = {_fp("extract_keywords", query): "- quantize detector, int8 deployment\n2. tensorrt engine"}
    rtv = _retriever(fixture=fixture)
    assert rtv.extract_keywords(query) == ["quantize detector", "int8 deployment", "tensorrt engine"]


def test_extract_keywords_empty_query_rejected() -> None:
    with pytest.raises(ValueError):
        _retriever().extract_keywords("")


def test_extract_keywords_falls_back_when_gateway_dead() -> None:
    rtv = _retriever(fixture={})  # no scripted replies: every call fails
    assert rtv.extract_keywords("How to install mmdet and mmcv") == ["install", "mmdet", "mmcv"]


def test_extract_keywords_fallback_strips_punctuation() -> None:
    rtv = _retriever(fixture={})
    assert rtv.extract_keywords("why does conversion fail?") == ["conversion", "fail"]


def test_extract_keywords_all_stopwords_returns_query() -> None:
    rtv = _retriever(fixture={})
    assert rtv.extract_keywords("how to?") == ["how to?"]


# ── knowledge search ─────────────────────────────────────────────────────

DOCS = (
    "install the cuda toolkit with the runfile",
    "convert a detector to tensorrt format",
    "profile gpu memory during quantization",
)


def test_identity_phrase_ranks_its_chunk_first() -> None:
    rtv = _retriever(texts=DOCS)
    hits = rtv.knowledge_search([DOCS[1]], k=3)
    chunk, sim = hits[0]
    assert chunk.body == DOCS[1]
    assert sim == pytest.approx(1.0, abs=1e-9)


def test_two_phrases_same_chunk_deduped_with_max_similarity() -> None:
    rtv = _retriever(texts=DOCS)
    a = rtv.store.search_text("install cuda toolkit", 3)[0]
    b = rtv.store.search_text("cuda toolkit runfile", 3)[0]
    assert a.chunk_id == b.chunk_id
    hits = rtv.knowledge_search(["install cuda toolkit", "cuda toolkit runfile"], k=3)
    ids = [chunk.chunk_id for chunk, _ in hits]
    assert ids.count(a.chunk_id) == 1
    merged = dict((chunk.chunk_id, sim) for chunk, sim in hits)
    assert merged[a.chunk_id] == pytest.approx(max(a.similarity, b.similarity))


def test_knowledge_search_empty_store() -> None:
    rtv = _retriever(texts=())
    assert rtv.knowledge_search(["anything"], k=3) == []


class _DeadEmbedder:
    def __init__(self, dim=64) -> None:
        self.inner = MockEmbedder(dim=dim)
        self.broken = False

    @property
    def dim(self) -> int:
        return self.inner.dim

    def embed(self, texts):
        if self.broken:
            raise EmbeddingUnavailable("down")
        return self.inner.embed(texts)


def test_knowledge_search_embedder_outage_is_empty() -> None:
    embedder = _DeadEmbedder()
    store = FeatureStore(embedder)
    store.add_document(make_document(DOCS[0]))
    embedder.broken = True
    rtv = Retriever(store, _gateway({"*": "5"}))
    assert rtv.knowledge_search(["cuda"], k=3) == []


# ── rerank and full-document expansion ───────────────────────────────────


def _chunk_of(store: FeatureStore, body: str) -> Chunk:
    for chunk in store.chunks:
        if chunk.body == body:
            return chunk
    raise AssertionError(f"no chunk with body {body!r}")


def test_rerank_keeps_high_drops_low() -> None:
    query = "how do I install cuda?"
    store = _store(DOCS)
    fixture = {
        _fp("doc_relevance", query=query, document=DOCS[0]): "9",
        _fp("doc_relevance", query=query, document=DOCS[1]): "2",
    }
    rtv = Retriever(store, _gateway(fixture))
    candidates = [(_chunk_of(store, DOCS[0]), 0.8), (_chunk_of(store, DOCS[1]), 0.7)]
    pieces = rtv.rerank_by_llm(query, candidates)
    assert len(pieces) == 1
    assert pieces[0].source == "knowledge"
    assert pieces[0].relevance == 9
    assert pieces[0].text == DOCS[0]


def test_rerank_drops_unscorable_candidate() -> None:
    query = "quantization?"
    store = _store(DOCS)
    fixture = {
        _fp("doc_relevance", query=query, document=DOCS[0]): "no idea",
        _fp("doc_relevance", query=query, document=DOCS[2]): "8",
    }
    rtv = Retriever(store, _gateway(fixture))
    pieces = rtv.rerank_by_llm(query, [(_chunk_of(store, DOCS[0]), 0.9), (_chunk_of(store, DOCS[2]), 0.5)])
    assert [p.relevance for p in pieces] == [8]


def test_rerank_enforces_candidate_cap() -> None:
    store = _store(DOCS)
    rtv = Retriever(store, _gateway({"*": "9"}), max_rerank=2)
    candidates = [(store.chunks[0], 0.5)] * 3
    with pytest.raises(ValueError):
        rtv.rerank_by_llm("q", candidates)


def test_rerank_empty_candidates() -> None:
    assert _retriever(texts=DOCS).rerank_by_llm("q", []) == []


def test_fetch_source_expands_to_whole_document() -> None:
    text = "# A\nalpha part\n# B\nbeta part\n# C\ngamma part"
    store = FeatureStore(MockEmbedder(dim=64), max_chars=12)
    store.add_document(make_document(text, source_path="guide.md"))
    assert store.doc_count == 1
    assert len(store.chunks) >= 3
    rtv = Retriever(store, _gateway({"*": "5"}))
    piece = rtv.fetch_source(store.chunks[1], relevance=7)
    assert piece.text == text
    assert piece.source == "knowledge"
    assert piece.relevance == 7
    assert piece.origin == "guide.md"
    for part in ("alpha part", "beta part", "gamma part"):
        assert part in piece.text


def test_fetch_source_truncates_to_piece_cap() -> None:
    text = "z" * 200
    store = _store((text,))
    rtv = Retriever(store, _gateway({"*": "5"}), max_piece_tokens=10)
    piece = rtv.fetch_source(store.chunks[0])
    assert piece.tokens <= 10
    assert piece.title.endswith("(truncated)")
    assert text.startswith(piece.text)


def test_fetch_source_stale_doc_id() -> None:
    rtv = _retriever(texts=DOCS)
    ghost = Chunk(chunk_id="nope:00000000-00000001", doc_id="nope", header_path=[],
                  body="x", char_span=(0, 1), token_count=1)
    with pytest.raises(SourceMissing):
        rtv.fetch_source(ghost)


def test_knowledge_pieces_end_to_end() -> None:
    query = "how do I install the cuda toolkit?"
    keywords = ["install cuda toolkit"]
    store = _store(DOCS)
    hits = Retriever(store, _gateway({"*": "0"})).knowledge_search(keywords)
    fixture = {"*": "0"}
    top_chunk = hits[0][0]
    fixture[_fp("doc_relevance", query=query, document=top_chunk.body)] = "9"
    rtv = Retriever(store, _gateway(fixture))
    pieces = rtv.knowledge_pieces(query, keywords)
    assert len(pieces) == 1
    assert pieces[0].text == DOCS[0]
    assert pieces[0].relevance == 9
    assert pieces[0].origin == "doc0.md"


# ── web search ───────────────────────────────────────────────────────────


class _FakeWeb:
    def __init__(self, results, pages, fail_urls=()) -> None:
        self.results = results
        self.pages = pages
        self.fail_urls = set(fail_urls)
        self.search_calls = 0

    def search(self, query: str):
        self.search_calls += 1
        return self.results

    def fetch(self, url: str) -> str:
        if url in self.fail_urls:
            raise OSError(f"unreachable {url}")
        return self.pages[url]


def test_web_search_without_client_is_empty() -> None:
    assert _retriever().web_search(["cuda"]) == []


def test_web_search_filters_unsafe_and_low_relevance() -> None:
    keywords = ["cuda", "install"]
    query = " ".join(keywords)
    results = [
        {"url": "https://a.example/cuda", "snippet": "official cuda install steps"},
        {"url": "https://b.example/bad", "snippet": "casino gambling bonus"},
        {"url": "https://c.example/misc", "snippet": "celebrity gossip roundup"},
    ]
    pages = {
        "https://a.example/cuda": "run the installer with --toolkit",
        "https://b.example/bad": "gambling spam page",
        "https://c.example/misc": "gossip text",
    }
    fixture = {
        _fp("doc_relevance", query=query, document="official cuda install steps"): "8",
        _fp("doc_relevance", query=query, document="celebrity gossip roundup"): "1",
    }
    rtv = Retriever(
        _store(()), _gateway(fixture),
        web_client=_FakeWeb(results, pages),
        moderation=ScriptedModeration(flagged_substrings=("gambling",)),
    )
    out = rtv.web_search(keywords)
    by_url = {r.url: r for r in out}
    assert by_url["https://a.example/cuda"].safe and by_url["https://a.example/cuda"].relevance == 8
    assert not by_url["https://b.example/bad"].safe
    assert "https://c.example/misc" not in by_url  # scored below the bar

    pieces = rtv.web_pieces(out)
    assert [p.origin for p in pieces] == ["https://a.example/cuda"]


def test_web_search_dead_client_is_empty() -> None:
    class _Dead:
        def search(self, query):
            raise OSError("no network")

        def fetch(self, url):
            raise OSError("no network")

    rtv = Retriever(_store(()), _gateway({"*": "9"}), web_client=_Dead())
    assert rtv.web_search(["cuda"]) == []


def test_web_search_unreachable_page_dropped() -> None:
    results = [{"url": "https://a.example/x", "snippet": "s"}]
    rtv = Retriever(_store(()), _gateway({"*": "9"}),
                    web_client=_FakeWeb(results, {}, fail_urls=["https://a.example/x"]))
    assert rtv.web_search(["q"]) == []


def test_web_search_moderation_outage_marks_unsafe() -> None:
    results = [{"url": "https://a.example/x", "snippet": "s"}]
    pages = {"https://a.example/x": "text"}
    rtv = Retriever(_store(()), _gateway({"*": "9"}),
                    web_client=_FakeWeb(results, pages),
                    moderation=ScriptedModeration(broken=True))
    out = rtv.web_search(["q"])
    assert len(out) == 1 and not out[0].safe
    assert rtv.web_pieces(out) == []


def test_web_search_respects_max_results() -> None:
    results = [{"url": f"https://a.example/{i}", "snippet": f"s{i}"} for i in range(10)]
    pages = {f"https://a.example/{i}": f"t{i}" for i in range(10)}
    rtv = Retriever(_store(()), _gateway({"*": "9"}), web_client=_FakeWeb(results, pages))
    assert len(rtv.web_search(["q"], max_results=3)) == 3


def test_doc_domain_boost_applies_and_caps() -> None:
    route = RepoRoute(group_id="g", repo_name="r", search_root=".", doc_domains=("pytorch.org",))
    results = [
        WebResult("https://pytorch.org/docs", "s", "t", safe=True, relevance=7),
        WebResult("https://docs.pytorch.org/x", "s", "t", safe=True, relevance=9),
        WebResult("https://other.example/y", "s", "t", safe=True, relevance=7),
    ]
    pieces = _retriever().web_pieces(results, route)
    by_origin = {p.origin: p.relevance for p in pieces}
    assert by_origin["https://pytorch.org/docs"] == 9
    assert by_origin["https://docs.pytorch.org/x"] == 10
    assert by_origin["https://other.example/y"] == 7


# ── repository search ────────────────────────────────────────────────────


def _fixture_repo(tmp_path: Path) -> Path:
    root = tmp_path / "repo"
    root.mkdir()
    (root / "summarize.py").write_text(
        "class Summarizer:\n    def run(self):\n        return summarize_all()\n", encoding="utf-8"
    )
    (root / "docs").mkdir()
    (root / "docs" / "usage.md").write_text("The summarizer runs nightly.\n", encoding="utf-8")
    (root / "unrelated.py").write_text("print('hello')\n", encoding="utf-8")
    (root / "image.bin").write_bytes(b"\x00\x01")
    return root


def _grep_oracle(root: Path, needles: list[str]) -> set[str]:
    found = set()
    for path in root.rglob("*"):
        if not path.is_file() or path.suffix == ".bin":
            continue
        text = path.read_text(encoding="utf-8").lower()
        if any(n in text for n in needles):
            found.add(str(path))
    return found


def test_repo_search_matches_grep_oracle(tmp_path: Path) -> None:
    root = _fixture_repo(tmp_path)
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(root))
    pieces = _retriever().repo_search(route, ["summarizer"])
    assert {p.origin for p in pieces} == _grep_oracle(root, ["summarizer"])
    assert all(p.source == "repo" for p in pieces)
    assert all(p.relevance == 5 for p in pieces)
    assert any(p.title.startswith("demo/") for p in pieces)


def test_repo_search_identifier_aware(tmp_path: Path) -> None:
    root = tmp_path / "repo"
    root.mkdir()
    (root / "store.py").write_text("class FeatureStore:\n    pass\n", encoding="utf-8")
    (root / "other.py").write_text("feature_store = None\n", encoding="utf-8")
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(root))
    pieces = _retriever().repo_search(route, ["feature store"])
    assert {p.origin for p in pieces} == {str(root / "store.py"), str(root / "other.py")}


def test_repo_search_absent_keyword(tmp_path: Path) -> None:
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(_fixture_repo(tmp_path)))
    assert _retriever().repo_search(route, ["zzz_not_here"]) == []


def test_repo_search_unreadable_root(tmp_path: Path) -> None:
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(tmp_path / "missing"))
    with pytest.raises(RepoUnavailable):
        _retriever().repo_search(route, ["x"])


def test_route_lookup() -> None:
    route = RepoRoute(group_id="g", repo_name="demo", search_root=".")
    rtv = _retriever(routes={"g": route})
    assert rtv.route_repo("g") is route
    assert rtv.route_repo("other") is None


def test_repo_search_caps_piece_count(tmp_path: Path) -> None:
    root = tmp_path / "repo"
    root.mkdir()
    for i in range(10):
        (root / f"m{i}.py").write_text(f"needle = {i}\n" * (i + 1), encoding="utf-8")
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(root))
    pieces = Retriever(_store(()), _gateway({"*": "5"}), max_repo_pieces=3).repo_search(route, ["needle"])
    assert len(pieces) == 3
    # most matching lines first
    assert [p.origin for p in pieces] == [str(root / "m9.py"), str(root / "m8.py"), str(root / "m7.py")]


# ── paging ───────────────────────────────────────────────────────────────


def _paging_repo(tmp_path: Path) -> Path:
    root = tmp_path / "repo"
    root.mkdir()
    (root / "alpha.py").write_text("def add(a, b):\n    return a + b\n", encoding="utf-8")
    (root / "beta.py").write_text("def convert(model):\n    return model\n", encoding="utf-8")
    (root / "gamma.py").write_text("def profile(run):\n    return run\n", encoding="utf-8")
    return root


def _summary_fixture(root: Path) -> dict:
    fixture = {}
    for path in sorted(root.rglob("*.py")):
        name = path.stem
        fixture[_fp("module_summary", name=name, source=path.read_text(encoding="utf-8"))] = f"Handles {name}."
    return fixture


def test_paging_disabled_gates_both_operations(tmp_path: Path) -> None:
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(_paging_repo(tmp_path)))
    rtv = _retriever()
    with pytest.raises(PagingDisabled):
        rtv.paging_summarize(route)
    with pytest.raises(PagingDisabled):
        rtv.paging_query("q", {}, route)


def test_paging_summarize_builds_module_map(tmp_path: Path) -> None:
    root = _paging_repo(tmp_path)
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(root))
    rtv = Retriever(_store(()), _gateway(_summary_fixture(root)), paging_enabled=True)
    summaries = rtv.paging_summarize(route)
    assert summaries == {"alpha": "Handles alpha.", "beta": "Handles beta.", "gamma": "Handles gamma."}


def test_paging_query_opens_selected_module(tmp_path: Path) -> None:
    root = _paging_repo(tmp_path)
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(root))
    summaries = {"alpha": "Handles alpha.", "beta": "Handles beta.", "gamma": "Handles gamma."}
    listing = "\n".join(f"{n}: {summaries[n]}" for n in sorted(summaries))
    query = "how does model conversion work?"
    fixture = {_fp("module_select", query=query, listing=listing): "beta"}
    rtv = Retriever(_store(()), _gateway(fixture), paging_enabled=True)
    pieces = rtv.paging_query(query, summaries, route)
    assert len(pieces) == 1
    assert pieces[0].title == "beta"
    assert pieces[0].text == (root / "beta.py").read_text(encoding="utf-8")
    assert pieces[0].source == "repo"


def test_paging_query_unknown_module_falls_back(tmp_path: Path) -> None:
    root = _paging_repo(tmp_path)
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(root))
    summaries = {"alpha": "Handles alpha.", "beta": "Handles beta."}
    listing = "\n".join(f"{n}: {summaries[n]}" for n in sorted(summaries))
    query = "where is convert defined?"
    fixture = {_fp("module_select", query=query, listing=listing): "delta"}
    rtv = Retriever(_store(()), _gateway(fixture), paging_enabled=True)
    pieces = rtv.paging_query(query, summaries, route)
    expected = rtv.repo_search(route, rtv.fallback_keywords(query))
    assert [p.origin for p in pieces] == [p.origin for p in expected]
    assert pieces  # "convert" really is in the fixture repo


def test_paging_query_gateway_failure_falls_back(tmp_path: Path) -> None:
    root = _paging_repo(tmp_path)
    route = RepoRoute(group_id="g", repo_name="demo", search_root=str(root))
    rtv = Retriever(_store(()), _gateway({}), paging_enabled=True)
    pieces = rtv.paging_query("where is convert defined?", {"alpha": "A."}, route)
    assert [p.title for p in pieces] == ["demo/beta.py"]
