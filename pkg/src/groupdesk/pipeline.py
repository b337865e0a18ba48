"""Query orchestration: gates in, auditable reply out.

A bundle flows through working hours, the two-stage refusal, retrieval,
generation, answer-relevance scoring, and the security checks, in that
order: cheap deterministic gates first, security last so it sees the
final outgoing text. Every gate appends to the record's trace whether it
passes or not, every bundle persists exactly one ReplyRecord, and a
failed gate is always the last trace entry because the run stops there.

Nothing outward happens unless the record reaches state "sent"; a sent
reply can later be withdrawn, which is the one state transition allowed
after sending.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Callable, Protocol, Sequence
from zoneinfo import ZoneInfo

from . import prompts
from .errors import (
    BackendUnavailable,
    ContextOverflow,
    EngineError,
    InvalidState,
    ModerationUnavailable,
    NoCapableBackend,
    NotFound,
    RepoUnavailable,
    UnscorableResponse,
)
from .llm import CAP_LONG_CONTEXT, BackendProfile, render_request, user_request
from .preprocess import QueryBundle, split_user_key
from .rejection import OUTCOME_REJECTED, STAGE_SIMILARITY, RejectionPipeline
from .retrieval import (
    DEFAULT_BUDGET_TOKENS,
    DEFAULT_RESERVE_TOKENS,
    LONG_BUDGET_TOKENS,
    ContextBundle,
    Retriever,
)

logger = logging.getLogger(__name__)

STATE_PENDING = "pending"
STATE_SENT = "sent"
STATE_WITHHELD = "withheld"
STATE_WITHDRAWN = "withdrawn"
STATES = (STATE_PENDING, STATE_SENT, STATE_WITHHELD, STATE_WITHDRAWN)

GATE_HOURS = "working_hours"
GATE_SIMILARITY = "rejection.similarity"
GATE_QUESTION = "rejection.question_score"
GATE_KEYWORDS = "keywords"
GATE_KNOWLEDGE = "retrieval.knowledge"
GATE_REPO = "retrieval.repo"
GATE_WEB = "retrieval.web"
GATE_ASSEMBLE = "assemble"
GATE_GENERATE = "generate"
GATE_RELEVANCE = "relevance"
GATE_SECURITY = "security"

DEFAULT_THETA_ANS = 5
DEFAULT_THETA_SEC = 7

CHECK_TOPIC = "topic_score"
CHECK_EXTERNAL = "external_service"

_SCORING_FAILURES = (UnscorableResponse, BackendUnavailable, NoCapableBackend)


@dataclass(frozen=True)
class TraceEntry:
    gate: str
    outcome: str  # pass | fail | info
    detail: dict
    timestamp: str

    def to_dict(self) -> dict:
        return {"gate": self.gate, "outcome": self.outcome, "detail": self.detail, "timestamp": self.timestamp}


@dataclass
class ReplyRecord:
    reply_id: str
    user_key: str
    query_text: str
    answer: str | None = None
    citations: list[str] = field(default_factory=list)
    trace: list[TraceEntry] = field(default_factory=list)
    state: str = STATE_PENDING

    @property
    def group_id(self) -> str:
        return split_user_key(self.user_key)[0]

    def to_dict(self) -> dict:
        return {
            "reply_id": self.reply_id,
            "user_key": self.user_key,
            "group_id": self.group_id,
            "query_text": self.query_text,
            "answer": self.answer,
            "citations": list(self.citations),
            "trace": [entry.to_dict() for entry in self.trace],
            "state": self.state,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ReplyRecord":
        return cls(
            reply_id=data["reply_id"],
            user_key=data["user_key"],
            query_text=data["query_text"],
            answer=data.get("answer"),
            citations=list(data.get("citations", [])),
            trace=[
                TraceEntry(e["gate"], e["outcome"], e["detail"], e["timestamp"])
                for e in data.get("trace", [])
            ],
            state=data.get("state", STATE_PENDING),
        )


@dataclass(frozen=True)
class SecurityVerdict:
    allowed: bool
    reasons: tuple[dict, ...]


@dataclass(frozen=True)
class WorkingHours:
    start_minute: int
    end_minute: int
    timezone: str = "UTC"

    def __post_init__(self) -> None:
        if not 0 <= self.start_minute < self.end_minute <= 1440:
            raise ValueError("need 0 <= start < end <= 1440")
        try:
            ZoneInfo(self.timezone)
        except Exception as exc:
            raise ValueError(f"unknown timezone {self.timezone!r}") from exc


def working_hours_gate(now: datetime, cfg: WorkingHours) -> tuple[bool, int]:
    """Allow iff the local wall clock sits inside [start, end)."""
    local = now.astimezone(ZoneInfo(cfg.timezone))
    minute = local.hour * 60 + local.minute
    return cfg.start_minute <= minute < cfg.end_minute, minute


def context_material(bundle: ContextBundle) -> str:
    """Numbered material blocks as they appear inside the answer prompt."""
    blocks = [
        f"[{i}] {piece.title} ({piece.origin})\n{piece.text}"
        for i, piece in enumerate(bundle.pieces, start=1)
    ]
    return "\n\n".join(blocks) if blocks else "(no material available)"


class ReplySink(Protocol):
    """What the pipeline needs from persistence."""

    def create(self, user_key: str, query_text: str) -> ReplyRecord: ...

    def update(self, record: ReplyRecord) -> None: ...

    def get(self, reply_id: str) -> ReplyRecord | None: ...


class WebhookAdapter:
    """Best-effort outbound IM events; a dead webhook never blocks a reply."""

    def __init__(self, url: str, client=None, timeout: float = 10.0) -> None:
        import httpx

        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def __call__(self, event: dict) -> None:
        try:
            self._client.post(self.url, json=event).raise_for_status()
        except Exception as exc:
            logger.warning("webhook delivery failed: %s", exc)


class ResponsePipeline:
    def __init__(
        self,
        rejection: RejectionPipeline,
        retriever: Retriever,
        replies: ReplySink,
        *,
        adapter: Callable[[dict], None] | None = None,
        moderation=None,
        working_hours: WorkingHours | None = None,
        theta_ans: int = DEFAULT_THETA_ANS,
        theta_sec: int = DEFAULT_THETA_SEC,
        budget_tokens: int = DEFAULT_BUDGET_TOKENS,
        reserve_tokens: int = DEFAULT_RESERVE_TOKENS,
        long_budget_tokens: int = LONG_BUDGET_TOKENS,
        clock: Callable[[], datetime] | None = None,
    ) -> None:
        if not 0 <= theta_ans <= 10 or not 0 <= theta_sec <= 10:
            raise ValueError("theta_ans and theta_sec must lie in [0, 10]")
        self.rejection = rejection
        self.retriever = retriever
        self.gateway = retriever.gateway
        self.replies = replies
        self.adapter = adapter
        self.moderation = moderation
        self.working_hours = working_hours
        self.theta_ans = theta_ans
        self.theta_sec = theta_sec
        self.budget_tokens = budget_tokens
        self.reserve_tokens = reserve_tokens
        self.long_budget_tokens = long_budget_tokens
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    # ── trace helpers ────────────────────────────────────────────────────

    def _entry(self, record: ReplyRecord, gate: str, outcome: str, detail: dict) -> None:
        record.trace.append(TraceEntry(gate, outcome, detail, self._clock().isoformat()))

    def _fail(self, record: ReplyRecord, gate: str, detail: dict) -> ReplyRecord:
        self._entry(record, gate, "fail", detail)
        record.state = STATE_WITHHELD
        return record

    def _lock_for(self, user_key: str) -> threading.Lock:
        with self._locks_guard:
            if user_key not in self._locks:
                self._locks[user_key] = threading.Lock()
            return self._locks[user_key]

    # ── the run ──────────────────────────────────────────────────────────

    def run(self, bundle: QueryBundle) -> ReplyRecord:
        """One bundle in, exactly one persisted ReplyRecord out.

        Runs for the same user_key are serialized; distinct users may run
        concurrently.
        """
        with self._lock_for(bundle.user_key):
            record = self.replies.create(bundle.user_key, bundle.text)
            try:
                self._run_gates(record, bundle)
            except EngineError as exc:
                logger.warning("run for %s stopped by %s", record.reply_id, exc)
                self._fail(record, "internal", {"error": str(exc)})
            self.replies.update(record)
        if record.state == STATE_SENT and self.adapter is not None:
            self.adapter(
                {"type": "send", "group_id": record.group_id, "reply_id": record.reply_id, "text": record.answer}
            )
        return record

    def _run_gates(self, record: ReplyRecord, bundle: QueryBundle) -> None:
        query = bundle.text
        group_id = record.group_id

        if self.working_hours is not None:
            allowed, minute = working_hours_gate(self._clock(), self.working_hours)
            if not allowed:
                self._fail(record, GATE_HOURS, {"reason": "out_of_hours", "local_minute": minute})
                return
            self._entry(record, GATE_HOURS, "pass", {"local_minute": minute})
        else:
            self._entry(record, GATE_HOURS, "pass", {"configured": False})

        decision = self.rejection.decide(query)
        sim_detail = {"top_similarity": decision.detail.get("top_similarity")}
        if decision.outcome == OUTCOME_REJECTED and decision.stage == STAGE_SIMILARITY:
            self._fail(record, GATE_SIMILARITY, sim_detail)
            return
        self._entry(record, GATE_SIMILARITY, "pass", sim_detail)
        score_detail = {"score": decision.detail.get("score")}
        if decision.outcome == OUTCOME_REJECTED:
            self._fail(record, GATE_QUESTION, score_detail)
            return
        self._entry(record, GATE_QUESTION, "pass", score_detail)

        keywords = self.retriever.extract_keywords(query)
        self._entry(record, GATE_KEYWORDS, "info", {"keywords": keywords})

        try:
            knowledge = self.retriever.knowledge_pieces(query, keywords)
            self._entry(record, GATE_KNOWLEDGE, "info", {"pieces": len(knowledge)})
        except (BackendUnavailable, NoCapableBackend) as exc:
            knowledge = []
            self._entry(record, GATE_KNOWLEDGE, "info", {"pieces": 0, "error": str(exc)})

        route = self.retriever.route_repo(group_id)
        repo_pieces: list = []
        if route is None:
            self._entry(record, GATE_REPO, "info", {"skipped": "no route"})
        else:
            try:
                if self.retriever.paging_enabled:
                    summaries = self.retriever.paging_summarize(route)
                    repo_pieces = self.retriever.paging_query(query, summaries, route)
                else:
                    repo_pieces = self.retriever.repo_search(route, keywords)
                self._entry(record, GATE_REPO, "info", {"pieces": len(repo_pieces)})
            except (RepoUnavailable, BackendUnavailable, NoCapableBackend) as exc:
                self._entry(record, GATE_REPO, "info", {"pieces": 0, "error": str(exc)})

        try:
            results = self.retriever.web_search(keywords)
            web_pieces = self.retriever.web_pieces(results, route)
            self._entry(record, GATE_WEB, "info", {"results": len(results), "pieces": len(web_pieces)})
        except (BackendUnavailable, NoCapableBackend) as exc:
            web_pieces = []
            self._entry(record, GATE_WEB, "info", {"results": 0, "pieces": 0, "error": str(exc)})

        pieces = list(knowledge) + repo_pieces + web_pieces
        raw_total = sum(p.tokens for p in pieces)
        budget = self.budget_tokens
        if raw_total > budget - self.reserve_tokens and self._has_long_context():
            budget = self.long_budget_tokens
        context = self.retriever.assemble(pieces, budget, self.reserve_tokens)
        self._entry(
            record,
            GATE_ASSEMBLE,
            "info",
            {"budget": budget, "pieces": len(context.pieces), "total_tokens": context.total_tokens},
        )

        try:
            answer, profile = self.generate_answer(query, context)
        except (NoCapableBackend, BackendUnavailable, ContextOverflow) as exc:
            self._fail(record, GATE_GENERATE, {"reason": "generation_failed", "error": str(exc)})
            return
        detail: dict = {"backend": profile.name}
        if not context.pieces:
            detail["low_evidence"] = True
        self._entry(record, GATE_GENERATE, "pass", detail)
        record.answer = answer
        record.citations = list(context.citations)

        try:
            relevance = self.gateway.score("answer_relevance", query=query, answer=answer)
        except _SCORING_FAILURES as exc:
            self._fail(record, GATE_RELEVANCE, {"error": str(exc)})
            return
        if relevance.value < self.theta_ans:
            self._fail(record, GATE_RELEVANCE, {"score": relevance.value})
            return
        self._entry(record, GATE_RELEVANCE, "pass", {"score": relevance.value})

        verdict = self.security_gate([answer])
        if not verdict.allowed:
            self._fail(record, GATE_SECURITY, {"reasons": list(verdict.reasons)})
            return
        self._entry(record, GATE_SECURITY, "pass", {"checked": 1})
        record.state = STATE_SENT

    # ── individual gates, callable on their own ──────────────────────────

    def generate_answer(self, query: str, context: ContextBundle) -> tuple[str, BackendProfile]:
        """Question first, then the numbered material with citations."""
        prompt = prompts.render_template(
            "answer", query=query, context=context_material(context),
            directory=self.gateway.template_dir,
        )
        req = user_request(prompt)
        needed = self.gateway.count_tokens(render_request(req)) + self.reserve_tokens
        return self.gateway.generate(req, needed_tokens=needed)

    def relevance_gate(self, query: str, answer: str) -> tuple[bool, int | None]:
        if not answer:
            raise ValueError("answer is empty")
        try:
            result = self.gateway.score("answer_relevance", query=query, answer=answer)
        except _SCORING_FAILURES as exc:
            logger.warning("relevance gate failing closed: %s", exc)
            return False, None
        return result.value >= self.theta_ans, result.value

    def security_gate(self, texts: Sequence[str]) -> SecurityVerdict:
        """Topic scoring on every outward string, then the external service.

        Any failure of either check is a denial reason; the verdict allows
        only when every executed check passed.
        """
        reasons: list[dict] = []
        for text in texts:
            try:
                result = self.gateway.score("security_topic", text)
            except _SCORING_FAILURES as exc:
                reasons.append({"check": CHECK_TOPIC, "detail": {"error": str(exc)}})
                continue
            if result.value >= self.theta_sec:
                reasons.append({"check": CHECK_TOPIC, "detail": {"score": result.value}})
        if self.moderation is not None:
            for text in texts:
                try:
                    if self.moderation.flagged(text):
                        reasons.append({"check": CHECK_EXTERNAL, "detail": {"flagged": True}})
                except ModerationUnavailable as exc:
                    reasons.append({"check": CHECK_EXTERNAL, "detail": {"error": str(exc)}})
        return SecurityVerdict(allowed=not reasons, reasons=tuple(reasons))

    def _has_long_context(self) -> bool:
        return any(
            CAP_LONG_CONTEXT in p.capabilities and p.max_tokens >= self.long_budget_tokens
            for p in self.gateway.profiles
        )

    # ── moderation of sent replies ───────────────────────────────────────

    def withdraw(self, reply_id: str) -> ReplyRecord:
        """sent -> withdrawn, with a recall event; repeat calls are no-ops."""
        record = self.replies.get(reply_id)
        if record is None:
            raise NotFound(f"no reply {reply_id!r}")
        if record.state == STATE_WITHDRAWN:
            return record
        if record.state != STATE_SENT:
            raise InvalidState(f"cannot withdraw a {record.state} reply")
        record.state = STATE_WITHDRAWN
        self._entry(record, "withdraw", "info", {})
        self.replies.update(record)
        if self.adapter is not None:
            self.adapter(
                {"type": "recall", "group_id": record.group_id, "reply_id": record.reply_id, "text": record.answer or ""}
            )
        return record
