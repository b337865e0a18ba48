"""Group-chat ingest: identity keys, filtering, and message aggregation.

Raw chat traffic is noisy: stickers, voice clips, screenshots, one-word
interjections, quote-replies aimed at other people. This module reduces a
stream of raw messages to clean per-user query bundles ready for the
answering pipeline. Consecutive messages from the same sender are packed
into one bundle because users routinely split a single question across
several short messages.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import logging
from dataclasses import dataclass, field
from typing import Protocol

import httpx

from .errors import InvalidIdentifier, OcrUnavailable

logger = logging.getLogger(__name__)

KEY_SEPARATOR = "|"

KIND_TEXT = "text"
KIND_IMAGE = "image"
KIND_QUOTE_REPLY = "quote_reply"
NON_TEXT_KINDS = frozenset({"video", "emoji", "voice"})
MESSAGE_KINDS = frozenset({KIND_TEXT, KIND_IMAGE, KIND_QUOTE_REPLY}) | NON_TEXT_KINDS

DROP_NON_TEXT = "non_text"
DROP_DIRECTED_ELSEWHERE = "directed_elsewhere"
DROP_TOO_SHORT = "too_short"


@dataclass(frozen=True)
class RawMessage:
    message_id: str
    group_id: str
    user_id: str
    timestamp: float
    kind: str
    content: str
    quoted_user: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in MESSAGE_KINDS:
            raise ValueError(f"unknown message kind {self.kind!r}")
        if (self.quoted_user is not None) != (self.kind == KIND_QUOTE_REPLY):
            raise ValueError("quoted_user is set exactly when kind is quote_reply")


@dataclass
class PreprocessConfig:
    min_query_chars: int = 6
    aggregation_window_seconds: float = 120.0
    idle_flush_seconds: float = 18.0
    max_bundle_chars: int = 4000
    assistant_identity: str = "assistant"


def make_user_key(group_id: str, user_id: str) -> str:
    for name, value in (("group_id", group_id), ("user_id", user_id)):
        if not value:
            raise InvalidIdentifier(f"{name} is empty")
        if KEY_SEPARATOR in value:
            raise InvalidIdentifier(f"{name} contains reserved separator {KEY_SEPARATOR!r}: {value!r}")
    return f"{group_id}{KEY_SEPARATOR}{user_id}"


def split_user_key(user_key: str) -> tuple[str, str]:
    group_id, sep, user_id = user_key.partition(KEY_SEPARATOR)
    if not sep or not group_id or not user_id:
        raise InvalidIdentifier(f"malformed user key {user_key!r}")
    return group_id, user_id


# ── OCR backends ─────────────────────────────────────────────────────────


class OcrBackend(Protocol):
    def extract(self, image: bytes) -> str: ...


class NoopOcr:
    """Default backend: no OCR service configured, images carry no text."""

    def extract(self, image: bytes) -> str:
        return ""


class HttpOcr:
    def __init__(self, endpoint: str, timeout: float = 10.0, client: httpx.Client | None = None) -> None:
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)

    def extract(self, image: bytes) -> str:
        try:
            resp = self._client.post(
                self.endpoint, content=image, headers={"content-type": "application/octet-stream"}
            )
            resp.raise_for_status()
            return str(resp.json()["text"])
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            raise OcrUnavailable(f"ocr service failed: {exc}") from exc


class ScriptedOcr:
    """Deterministic test backend: sha256(image bytes) -> text."""

    def __init__(self, mapping: dict[str, str]) -> None:
        self.mapping = dict(mapping)

    def extract(self, image: bytes) -> str:
        return self.mapping.get(hashlib.sha256(image).hexdigest(), "")


def decode_image_content(content: str) -> bytes:
    """Image payloads travel as base64 text; fall back to raw utf-8 bytes."""
    try:
        return base64.b64decode(content, validate=True)
    except (binascii.Error, ValueError):
        return content.encode("utf-8")


# ── Filtering ────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class FilterDecision:
    kept: bool
    text: str = ""
    reason: str | None = None


def filter_message(msg: RawMessage, cfg: PreprocessConfig, ocr: OcrBackend | None = None) -> FilterDecision:
    """Decide whether a message can contribute to a query bundle.

    Video/emoji/voice carry no extractable question. A quote-reply aimed at
    anyone but the assistant is conversation between humans. Whatever text
    survives must still meet the minimum length after trimming.
    """
    if msg.kind in NON_TEXT_KINDS:
        return FilterDecision(False, reason=DROP_NON_TEXT)

    if msg.kind == KIND_QUOTE_REPLY and msg.quoted_user != cfg.assistant_identity:
        return FilterDecision(False, reason=DROP_DIRECTED_ELSEWHERE)

    if msg.kind == KIND_IMAGE:
        backend = ocr or NoopOcr()
        try:
            text = backend.extract(decode_image_content(msg.content)).strip()
        except OcrUnavailable:
            logger.warning("ocr unavailable for message %s, dropping", msg.message_id)
            text = ""
    else:
        text = msg.content.strip()

    if len(text) < cfg.min_query_chars:
        return FilterDecision(False, reason=DROP_TOO_SHORT)
    return FilterDecision(True, text=text)


# ── Aggregation ──────────────────────────────────────────────────────────


@dataclass
class QueryBundle:
    user_key: str
    text: str
    window_start: float
    window_end: float
    source_message_ids: list[str]


@dataclass
class _Pending:
    texts: list[str] = field(default_factory=list)
    message_ids: list[str] = field(default_factory=list)
    window_start: float = 0.0
    last_ts: float = 0.0
    chars: int = 0


class Aggregator:
    """Packs consecutive kept messages per user key into query bundles.

    A pending bundle flushes when the sender goes idle, when the bundle
    window would exceed the aggregation limit, or when it grows past the
    character cap. All decisions use message timestamps plus the ticks fed
    by the caller, so the same stream always yields the same bundles.

    Not thread-safe by itself: the engine serializes calls per instance.
    """

    def __init__(self, cfg: PreprocessConfig) -> None:
        self.cfg = cfg
        self._pending: dict[str, _Pending] = {}

    def offer(self, msg: RawMessage, text: str) -> list[QueryBundle]:
        """Add a kept message's text; returns any bundles flushed by it."""
        key = make_user_key(msg.group_id, msg.user_id)
        now = msg.timestamp
        flushed: list[QueryBundle] = []
        pending = self._pending.get(key)
        if pending is not None:
            idle = now - pending.last_ts >= self.cfg.idle_flush_seconds
            # Appending must keep window_end - window_start within the limit.
            overflow = now - pending.window_start > self.cfg.aggregation_window_seconds
            if idle or overflow:
                flushed.append(self._flush(key))
                pending = None
        if pending is None:
            pending = _Pending(window_start=now, last_ts=now)
            self._pending[key] = pending
        pending.chars += len(text) + (1 if pending.texts else 0)
        pending.texts.append(text)
        pending.message_ids.append(msg.message_id)
        pending.last_ts = max(pending.last_ts, now)
        if pending.chars > self.cfg.max_bundle_chars:
            flushed.append(self._flush(key))
        return flushed

    def tick(self, now: float) -> list[QueryBundle]:
        """Flush bundles whose sender has gone idle (or window expired)."""
        flushed = []
        for key in list(self._pending):
            pending = self._pending[key]
            idle = now - pending.last_ts >= self.cfg.idle_flush_seconds
            expired = now - pending.window_start > self.cfg.aggregation_window_seconds
            if idle or expired:
                flushed.append(self._flush(key))
        return flushed

    def flush_all(self) -> list[QueryBundle]:
        return [self._flush(key) for key in list(self._pending)]

    def _flush(self, key: str) -> QueryBundle:
        pending = self._pending.pop(key)
        return QueryBundle(
            user_key=key,
            text="\n".join(pending.texts),
            window_start=pending.window_start,
            window_end=pending.last_ts,
            source_message_ids=list(pending.message_ids),
        )
