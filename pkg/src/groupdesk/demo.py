"""Self-contained demo workspace: config, documents, repo, scripted fixture.

``build_workspace`` writes everything the service needs to run offline,
including a fixture whose keys are the exact request fingerprints the
pipeline will produce for four canned scenarios: an answered question, a
chit-chat message, a declarative statement, and a banned-topic question.
Scripted replies for those fingerprints are computed by running the real
retrieval code against the freshly built stores, so fixture and pipeline
can never drift apart.

Usage: python3 -m groupdesk.demo <directory> [--port 8123]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .embedding import MockEmbedder
from .feature_store import FeatureStore, make_document
from .llm import (
    BackendProfile,
    CAP_GENERATION,
    CAP_LONG_CONTEXT,
    CAP_SCORING,
    LlmGateway,
    ScriptedChatBackend,
    request_fingerprint,
    user_request,
)
from .pipeline import context_material
from .prompts import render_template
from .retrieval import RepoRoute, Retriever

DEMO_GROUP = "demo"

QUERY_ANSWERED = "How do I enable the vector cache in quickstore?"
QUERY_CHITCHAT = "hey team, anyone watched the game yesterday evening?"
QUERY_STATEMENT = "The quickstore cache rebuilds its index after every restart."
QUERY_BANNED = "Can I use the quickstore vector cache to index scraped gambling site content?"

_KEYWORDS_ANSWERED = "vector cache\nquickstore"
_KEYWORDS_BANNED = "gambling site scraping\nbetting content"

_ANSWER_BANNED = (
    "Quickstore ships no scraping or wagering integrations; its ingest API "
    "only reads local files you already have."
)

_DOC_QUICKSTORE = """\
# Quickstore

Quickstore is a small embedded vector store for technical documents. It
keeps every embedding in a single memory-mapped file and answers cosine
top-k queries without a server process.

## Vector cache

Repeated queries often embed the same text. Enable the vector cache to
memoize embeddings across calls:

```toml
[cache]
vectors = true
capacity = 4096
```

With `vectors = true`, quickstore hashes each input text and reuses the
stored embedding on a hit. The cache is bounded by `capacity` entries and
evicts least-recently-used vectors first. Enabling it changes no search
results, only latency.

## Persistence

`store.persist(path)` writes the index atomically; `Quickstore.load(path)`
restores it. A store persisted with the cache enabled loads fine on a
build without the cache.
"""

_DOC_INGEST = """\
# Ingestion guide

Documents become searchable after splitting and embedding. The splitter
respects markdown headers, so sections stay intact and each chunk carries
its header path for display.

## Supported formats

Markdown and plain text index directly. PDF needs an external converter;
run it before ingestion and feed the resulting text files in.

## Re-indexing

Ingestion is idempotent: a document whose content hash is already present
is skipped, so re-running ingestion after adding files is safe.
"""

_REPO_FILES = {
    "telemetry.py": '''\
"""Latency counters for the demo service."""

from collections import Counter

_counts = Counter()


def observe(name: str, millis: float) -> None:
    _counts[name] += 1


def snapshot() -> dict:
    return dict(_counts)
''',
    "exporter.py": '''\
"""Flush telemetry snapshots to a JSON file."""

import json
from pathlib import Path

from telemetry import snapshot


def export(path: str) -> None:
    Path(path).write_text(json.dumps(snapshot(), sort_keys=True))
''',
}

_CORPUS_DOMAIN = [
    "How do I enable the vector cache in quickstore?",
    "Does quickstore support cosine similarity search?",
    "How can I persist a quickstore index to disk?",
    "What formats does the ingestion pipeline accept?",
    "Why does quickstore skip documents on re-ingestion?",
    "How do I bound the vector cache capacity?",
    "Can quickstore load an index persisted by an older build?",
    "Does the splitter keep markdown sections intact?",
    "How are embeddings memoized across repeated queries?",
    "What happens when the vector cache evicts entries?",
    "Is quickstore search exact or approximate?",
    "How do I convert PDF documents before ingestion?",
]

_CORPUS_CHAT = [
    "good morning everyone",
    "anyone up for lunch later?",
    "happy friday folks",
    "lol that meme was great",
    "welcome to the team, sarah!",
    "what a match last night",
    "I am stuck in traffic again",
    "congrats on the launch party",
    "see you all at the offsite",
    "my cat walked over the keyboard",
    "thanks everyone, have a nice weekend",
    "the coffee machine is broken again",
]

_CONFIG_TEMPLATE = """\
# Demo workspace. Regenerate with: python3 -m groupdesk.demo <dir>

[service]
host = "127.0.0.1"
port = {port}
tick_seconds = 0.2

[thresholds]
theta_sim = {theta_sim}
theta_q = 6
theta_rel = 5
theta_ans = 5
theta_sec = 7

[preprocess]
min_query_chars = 6
aggregation_window_seconds = 120.0
idle_flush_seconds = 0.0
max_bundle_chars = 4000

[budgets]
budget_tokens = 16000
reserve_tokens = 2000
long_budget_tokens = 32000

[embedding]
kind = "mock"
dim = 256

[stores]
rejection = "stores/rejection"
response = "stores/response"
replies = "replies"

[[backends]]
name = "scripted"
endpoint = "scripted:fixture.json"
max_tokens = 64000
capabilities = ["scoring", "generation", "long_context"]
cost_rank = 1

[routes.demo]
repo_name = "quickstore"
search_root = "repo/quickstore"
"""


def _fingerprint(template_id: str, *args: str, **kwargs: str) -> str:
    return request_fingerprint(user_request(render_template(template_id, *args, **kwargs)))


def _top_similarity(store: FeatureStore, text: str) -> float:
    hits = store.search_text(text, 1)
    return hits[0].similarity if hits else -1.0


def build_workspace(target: str | Path, *, port: int = 8123) -> Path:
    ws = Path(target)
    ws.mkdir(parents=True, exist_ok=True)
    (ws / "docs").mkdir(exist_ok=True)
    (ws / "docs" / "quickstore.md").write_text(_DOC_QUICKSTORE, encoding="utf-8")
    (ws / "docs" / "ingest.md").write_text(_DOC_INGEST, encoding="utf-8")
    repo = ws / "repo" / "quickstore"
    repo.mkdir(parents=True, exist_ok=True)
    for name, body in _REPO_FILES.items():
        (repo / name).write_text(body, encoding="utf-8")
    corpus_lines = [
        json.dumps({"text": t, "is_domain_question": True}) for t in _CORPUS_DOMAIN
    ] + [
        json.dumps({"text": t, "is_domain_question": False}) for t in _CORPUS_CHAT
    ]
    (ws / "corpus.jsonl").write_text("\n".join(corpus_lines) + "\n", encoding="utf-8")

    # Both stores index the same documents, with workspace-relative source
    # paths so citations stay readable and the workspace stays movable.
    embedder = MockEmbedder(256)
    docs = {
        "docs/quickstore.md": _DOC_QUICKSTORE,
        "docs/ingest.md": _DOC_INGEST,
    }
    stores = {}
    for name in ("rejection", "response"):
        store = FeatureStore(embedder)
        for rel, text in docs.items():
            store.add_document(make_document(text, source_path=rel, mime="text/markdown"))
        store.persist(ws / "stores" / name)
        stores[name] = store

    theta_sim = _calibrate_theta(stores["rejection"])
    fixture = _build_fixture(ws, stores["response"])
    (ws / "fixture.json").write_text(
        json.dumps(fixture, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    (ws / "config.toml").write_text(
        _CONFIG_TEMPLATE.format(port=port, theta_sim=theta_sim), encoding="utf-8"
    )
    return ws


def _calibrate_theta(store: FeatureStore) -> float:
    """Midpoint between chit-chat similarity and the weakest real query."""
    chat = _top_similarity(store, QUERY_CHITCHAT)
    lowest = min(
        _top_similarity(store, q)
        for q in (QUERY_ANSWERED, QUERY_STATEMENT, QUERY_BANNED)
    )
    if lowest - chat < 0.05:
        raise RuntimeError(
            f"demo corpus does not separate: chat={chat:.3f}, domain={lowest:.3f}"
        )
    return round((chat + lowest) / 2, 4)


def _build_fixture(ws: Path, store: FeatureStore) -> dict[str, str]:
    quickstore_doc = make_document(_DOC_QUICKSTORE, source_path="docs/quickstore.md").doc_id
    fixture: dict[str, str] = {
        _fingerprint("is_question", QUERY_ANSWERED): "9",
        _fingerprint("is_question", QUERY_STATEMENT): "2",
        _fingerprint("is_question", QUERY_BANNED): "9",
        _fingerprint("extract_keywords", QUERY_ANSWERED): _KEYWORDS_ANSWERED,
        _fingerprint("extract_keywords", QUERY_BANNED): _KEYWORDS_BANNED,
        # Anything off-script parses as a zero score, so improvised questions
        # get a clean question-gate rejection instead of a backend error.
        ScriptedChatBackend.DEFAULT_KEY: "0",
    }
    for chunk in store.chunks:
        relevant = chunk.doc_id == quickstore_doc
        fixture[_fingerprint("doc_relevance", query=QUERY_ANSWERED, document=chunk.body)] = (
            "8" if relevant else "2"
        )
        fixture[_fingerprint("doc_relevance", query=QUERY_BANNED, document=chunk.body)] = "2"

    # The answered scenario's generation prompt embeds the assembled context,
    # so derive it with the real retriever rather than transcribing it.
    gateway = LlmGateway(
        [
            BackendProfile(
                name="scripted",
                endpoint="scripted:fixture",
                max_tokens=64000,
                capabilities=frozenset({CAP_SCORING, CAP_GENERATION, CAP_LONG_CONTEXT}),
                cost_rank=1,
            )
        ],
        {"scripted": ScriptedChatBackend(dict(fixture))},
    )
    route = RepoRoute(
        group_id=DEMO_GROUP, repo_name="quickstore", search_root=str(ws / "repo" / "quickstore")
    )
    retriever = Retriever(store, gateway, routes={DEMO_GROUP: route})
    keywords = retriever.extract_keywords(QUERY_ANSWERED)
    pieces = list(retriever.knowledge_pieces(QUERY_ANSWERED, keywords))
    pieces += retriever.repo_search(route, keywords)
    bundle = retriever.assemble(pieces, 16000, reserve_tokens=2000)
    if not bundle.citations:
        raise RuntimeError("demo retrieval produced no citations")
    material = context_material(bundle)
    answer = (
        "Set `vectors = true` in the `[cache]` section of your quickstore "
        "config (see [1]); `capacity` bounds the LRU entry count. Search "
        "results do not change, only repeated-query latency."
    )
    fixture[_fingerprint("answer", query=QUERY_ANSWERED, context=material)] = answer
    fixture[_fingerprint("answer_relevance", query=QUERY_ANSWERED, answer=answer)] = "8"
    fixture[_fingerprint("security_topic", answer)] = "0"

    banned_keywords = retriever.extract_keywords(QUERY_BANNED)
    if retriever.knowledge_pieces(QUERY_BANNED, banned_keywords):
        raise RuntimeError("banned-topic query unexpectedly retrieved knowledge")
    if retriever.repo_search(route, banned_keywords):
        raise RuntimeError("banned-topic query unexpectedly matched the repo")
    fixture[_fingerprint("answer", query=QUERY_BANNED, context="(no material available)")] = (
        _ANSWER_BANNED
    )
    fixture[_fingerprint("answer_relevance", query=QUERY_BANNED, answer=_ANSWER_BANNED)] = "8"
    fixture[_fingerprint("security_topic", _ANSWER_BANNED)] = "9"
    return fixture


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Write a runnable demo workspace.")
    parser.add_argument("directory")
    parser.add_argument("--port", type=int, default=8123)
    args = parser.parse_args(argv)
    ws = build_workspace(args.directory, port=args.port)
    print(f"workspace ready: {ws}")
    print(f"serve with: groupdesk --config {ws / 'config.toml'} serve")
    return 0


if __name__ == "__main__":
    sys.exit(main())
