"""Engine: wires a ServiceConfig into a running assistant.

One Engine owns both feature stores, the gateway, the aggregation buffer,
and the response pipeline. HTTP handlers and the CLI talk only to this
class, so service and command line stay thin.
"""

from __future__ import annotations

import dataclasses
import logging
import threading
import time
from datetime import datetime, timezone
from pathlib import Path

from .config import ServiceConfig, Thresholds, parse_tunables, tunables_view
from .embedding import HttpEmbedder, MockEmbedder
from .errors import ConfigError, InvalidIdentifier
from .feature_store import FeatureStore, IngestSummary, make_document
from .llm import HttpChatBackend, LlmGateway, ScriptedChatBackend
from .moderation import HttpModeration
from .persistence import ReplyStore
from .pipeline import ReplyRecord, ResponsePipeline, WebhookAdapter, WorkingHours
from .preprocess import (
    Aggregator,
    MESSAGE_KINDS,
    QueryBundle,
    RawMessage,
    filter_message,
    make_user_key,
)
from .rejection import RejectionPipeline
from .retrieval import HttpWebSearch, Retriever

logger = logging.getLogger(__name__)

_VECTORS_FILE = "vectors.bin"


def _build_store(cfg: ServiceConfig, path: Path, embedder) -> FeatureStore:
    root = cfg.resolve(path)
    if (root / _VECTORS_FILE).is_file():
        return FeatureStore.load(root, embedder)
    return FeatureStore(embedder)


def _build_gateway(cfg: ServiceConfig) -> LlmGateway:
    backends = {}
    for profile in cfg.backends:
        if profile.endpoint.startswith("scripted:"):
            fixture = cfg.resolve(profile.endpoint[len("scripted:"):])
            backends[profile.name] = ScriptedChatBackend(fixture)
        else:
            backends[profile.name] = HttpChatBackend(profile.endpoint)
    return LlmGateway(cfg.backends, backends)


class Engine:
    def __init__(self, cfg: ServiceConfig, *, clock=None) -> None:
        cfg.validate()
        self.cfg = cfg
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        if cfg.embedding_kind == "http":
            embedder = HttpEmbedder(cfg.embedding_endpoint, cfg.embedding_dim)
        else:
            embedder = MockEmbedder(cfg.embedding_dim)
        self.embedder = embedder
        self.rejection_store = _build_store(cfg, cfg.rejection_store, embedder)
        self.response_store = _build_store(cfg, cfg.response_store, embedder)
        self.gateway = _build_gateway(cfg)
        moderation = HttpModeration(cfg.moderation_url) if cfg.moderation_url else None
        web_client = HttpWebSearch(cfg.web_search_endpoint) if cfg.web_search_endpoint else None
        routes = {
            gid: dataclasses.replace(route, search_root=str(cfg.resolve(route.search_root)))
            for gid, route in cfg.routes.items()
        }
        self.rejection = RejectionPipeline(
            self.rejection_store,
            self.gateway,
            theta_sim=cfg.thresholds.theta_sim,
            theta_q=cfg.thresholds.theta_q,
        )
        self.retriever = Retriever(
            self.response_store,
            self.gateway,
            routes=routes,
            web_client=web_client,
            moderation=moderation,
            theta_rel=cfg.thresholds.theta_rel,
            paging_enabled=cfg.paging_enabled,
        )
        self.replies = ReplyStore(cfg.resolve(cfg.replies_dir), clock=self._clock)
        adapter = WebhookAdapter(cfg.webhook_url) if cfg.webhook_url else None
        self.pipeline = ResponsePipeline(
            self.rejection,
            self.retriever,
            self.replies,
            adapter=adapter,
            moderation=moderation,
            working_hours=cfg.working_hours,
            theta_ans=cfg.thresholds.theta_ans,
            theta_sec=cfg.thresholds.theta_sec,
            budget_tokens=cfg.budget_tokens,
            reserve_tokens=cfg.reserve_tokens,
            long_budget_tokens=cfg.long_budget_tokens,
            clock=self._clock,
        )
        self.aggregator = Aggregator(cfg.preprocess)
        self._agg_lock = threading.Lock()
        self._tunable_lock = threading.Lock()

    # ── message intake ───────────────────────────────────────────────────

    def submit_message(self, payload: dict) -> dict:
        """Validate, filter, and buffer one raw message.

        Bundles the aggregator considers complete run synchronously, so the
        returned reply_ids cover everything this message flushed.
        """
        msg = self._parse_message(payload)
        decision = filter_message(msg, self.cfg.preprocess)
        if not decision.kept:
            return {"message_id": msg.message_id, "accepted": False,
                    "reason": decision.reason, "reply_ids": []}
        with self._agg_lock:
            bundles = self.aggregator.offer(msg, decision.text)
        reply_ids = [self.pipeline.run(b).reply_id for b in bundles]
        return {"message_id": msg.message_id, "accepted": True,
                "reason": None, "reply_ids": reply_ids}

    def _parse_message(self, payload: dict) -> RawMessage:
        if not isinstance(payload, dict):
            raise ValueError("message must be an object")
        for key in ("message_id", "group_id", "user_id", "content"):
            if not isinstance(payload.get(key), str) or not payload[key]:
                raise ValueError(f"missing or invalid {key!r}")
        kind = payload.get("kind", "text")
        if kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {kind!r}")
        ts = payload.get("timestamp", time.time())
        if isinstance(ts, bool) or not isinstance(ts, (int, float)):
            raise ValueError("timestamp must be a number")
        try:
            make_user_key(payload["group_id"], payload["user_id"])
        except InvalidIdentifier as exc:
            raise ValueError(str(exc)) from exc
        return RawMessage(
            message_id=payload["message_id"],
            group_id=payload["group_id"],
            user_id=payload["user_id"],
            timestamp=float(ts),
            kind=kind,
            content=payload["content"],
            quoted_user=payload.get("quoted_user"),
        )

    def tick(self, now: float | None = None) -> list[str]:
        """Flush idle aggregation windows and run whatever came out."""
        with self._agg_lock:
            bundles = self.aggregator.tick(time.time() if now is None else now)
        return [self.pipeline.run(b).reply_id for b in bundles]

    def query_once(self, group_id: str, user_id: str, text: str) -> ReplyRecord:
        """Run one query through the full pipeline, skipping aggregation."""
        text = text.strip()
        if not text:
            raise ValueError("query text is empty")
        now = time.time()
        bundle = QueryBundle(
            user_key=make_user_key(group_id, user_id),
            text=text,
            window_start=now,
            window_end=now,
            source_message_ids=["adhoc"],
        )
        return self.pipeline.run(bundle)

    def withdraw(self, reply_id: str) -> ReplyRecord:
        return self.pipeline.withdraw(reply_id)

    # ── knowledge management ─────────────────────────────────────────────

    def ingest(self, directory: str | Path, store: str = "response") -> IngestSummary:
        target, root = self._store_named(store)
        summary = target.ingest(directory)
        target.persist(root)
        return summary

    def add_knowledge(self, text: str, source_path: str = "", *,
                      include_rejection: bool = False) -> dict:
        if not text.strip():
            raise ValueError("document text is empty")
        record = make_document(text, source_path=source_path)
        added = self.response_store.add_document(record)
        self.response_store.persist(self.cfg.resolve(self.cfg.response_store))
        rejection_added = 0
        if include_rejection:
            rejection_added = self.rejection_store.add_document(record)
            self.rejection_store.persist(self.cfg.resolve(self.cfg.rejection_store))
        return {"doc_id": record.doc_id, "chunks": added,
                "rejection_chunks": rejection_added}

    def _store_named(self, name: str) -> tuple[FeatureStore, Path]:
        if name == "rejection":
            return self.rejection_store, self.cfg.resolve(self.cfg.rejection_store)
        if name == "response":
            return self.response_store, self.cfg.resolve(self.cfg.response_store)
        raise ValueError(f"unknown store {name!r}")

    # ── tunables ─────────────────────────────────────────────────────────

    def config_view(self) -> dict:
        with self._tunable_lock:
            return tunables_view(self.cfg.thresholds, self.cfg.working_hours)

    def update_tunables(self, body: dict) -> dict:
        """Replace thresholds and working hours; everything else is boot-time."""
        thresholds, hours = parse_tunables(body)
        with self._tunable_lock:
            self._apply_tunables(thresholds, hours)
            return tunables_view(self.cfg.thresholds, self.cfg.working_hours)

    def _apply_tunables(self, thresholds: Thresholds, hours: WorkingHours | None) -> None:
        self.cfg.thresholds = thresholds
        self.cfg.working_hours = hours
        self.rejection.theta_sim = thresholds.theta_sim
        self.rejection.theta_q = thresholds.theta_q
        self.retriever.theta_rel = thresholds.theta_rel
        self.pipeline.theta_ans = thresholds.theta_ans
        self.pipeline.theta_sec = thresholds.theta_sec
        self.pipeline.working_hours = hours


def engine_from_config(cfg: ServiceConfig, *, clock=None) -> Engine:
    try:
        return Engine(cfg, clock=clock)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"engine startup failed: {exc}") from exc
