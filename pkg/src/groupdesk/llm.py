"""Gateway to chat backends, treating remote models as RPC services.

Backends are described by capability profiles (scoring, generation, long
context) and picked per call: cheapest profile that fits the token need
wins. Integer scores parsed from replies act as control flow for the rest
of the engine, so parsing is strict and every scoring path fails closed.

A scripted backend replays canned responses keyed by the SHA-256 of the
rendered request, which makes full end-to-end runs byte-deterministic.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

import httpx

from . import prompts
from .errors import (
    BackendUnavailable,
    ContextOverflow,
    NoCapableBackend,
    ParseFailure,
    PermanentBackendError,
    TransientBackendError,
    UnscorableResponse,
)
from .tokens import DEFAULT_COUNTER, TokenCounter, count_tokens  # noqa: F401  (re-export)

logger = logging.getLogger(__name__)

ROLE_SYSTEM = "system"
ROLE_USER = "user"
ROLE_BOT = "bot"
ROLES = frozenset({ROLE_SYSTEM, ROLE_USER, ROLE_BOT})

CAP_SCORING = "scoring"
CAP_GENERATION = "generation"
CAP_LONG_CONTEXT = "long_context"
CAPABILITIES = frozenset({CAP_SCORING, CAP_GENERATION, CAP_LONG_CONTEXT})

SCORE_MIN = 0
SCORE_MAX = 10

DEFAULT_MAX_RETRIES = 2
DEFAULT_BACKOFF_SECONDS = 0.5
DEFAULT_RPM_LIMIT = 600

_INT_RE = re.compile(r"-?\d+")


@dataclass(frozen=True)
class BackendProfile:
    name: str
    endpoint: str
    max_tokens: int
    capabilities: frozenset[str]
    cost_rank: int
    rpm_limit: int = DEFAULT_RPM_LIMIT

    def __post_init__(self) -> None:
        object.__setattr__(self, "capabilities", frozenset(self.capabilities))
        if self.max_tokens <= 0:
            raise ValueError("max_tokens must be positive")
        if not self.capabilities:
            raise ValueError("profile needs at least one capability")
        unknown = self.capabilities - CAPABILITIES
        if unknown:
            raise ValueError(f"unknown capabilities: {sorted(unknown)}")
        if self.rpm_limit <= 0:
            raise ValueError("rpm_limit must be positive")


@dataclass(frozen=True)
class ChatTurn:
    role: str
    text: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass
class ChatRequest:
    system: str = ""
    turns: list[ChatTurn] = field(default_factory=list)
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")


@dataclass(frozen=True)
class ScoreResult:
    value: int
    raw_text: str
    backend: str


def user_request(text: str, system: str = "") -> ChatRequest:
    return ChatRequest(system=system, turns=[ChatTurn(ROLE_USER, text)])


def render_request(req: ChatRequest) -> str:
    """Canonical text form of a request, used for token counts and fixtures."""
    parts = [f"[{ROLE_SYSTEM}]\n{req.system}"]
    parts.extend(f"[{turn.role}]\n{turn.text}" for turn in req.turns)
    return "\n".join(parts)


def request_fingerprint(req: ChatRequest) -> str:
    return hashlib.sha256(render_request(req).encode("utf-8")).hexdigest()


def parse_score(raw: str) -> int:
    """First decimal integer token of ``raw``; must lie in [0, 10].

    A leading minus sign is part of the token, so "Score: -3" fails the
    range check instead of silently parsing as 3.
    """
    m = _INT_RE.search(raw)
    if m is None:
        raise ParseFailure(f"no integer in reply {raw!r}")
    value = int(m.group())
    if not SCORE_MIN <= value <= SCORE_MAX:
        raise ParseFailure(f"score {value} outside [{SCORE_MIN}, {SCORE_MAX}]")
    return value


# ── Backends ─────────────────────────────────────────────────────────────


class ChatBackend(Protocol):
    def complete(self, req: ChatRequest) -> str: ...


class HttpChatBackend:
    def __init__(self, endpoint: str, timeout: float = 30.0, client: httpx.Client | None = None) -> None:
        self.endpoint = endpoint
        self._client = client or httpx.Client(timeout=timeout)

    def complete(self, req: ChatRequest) -> str:
        payload = {
            "system": req.system,
            "turns": [{"role": t.role, "text": t.text} for t in req.turns],
            "temperature": req.temperature,
        }
        try:
            resp = self._client.post(self.endpoint, json=payload)
        except httpx.HTTPError as exc:
            raise TransientBackendError(f"wire failure: {exc}") from exc
        if resp.status_code >= 500:
            raise TransientBackendError(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise PermanentBackendError(f"client error {resp.status_code}")
        try:
            return str(resp.json()["text"])
        except (ValueError, KeyError) as exc:
            raise PermanentBackendError(f"malformed response body: {exc}") from exc


class ScriptedChatBackend:
    """Replays fixture responses keyed by SHA-256 of the rendered request.

    The fixture is a JSON object (or dict) mapping fingerprint -> reply
    text; the optional ``"*"`` entry answers any unmapped request.
    """

    DEFAULT_KEY = "*"

    def __init__(self, fixture: dict[str, str] | str | Path) -> None:
        if isinstance(fixture, (str, Path)):
            fixture = json.loads(Path(fixture).read_text(encoding="utf-8"))
        self.mapping: dict[str, str] = dict(fixture)

    def complete(self, req: ChatRequest) -> str:
        key = request_fingerprint(req)
        if key in self.mapping:
            return self.mapping[key]
        if self.DEFAULT_KEY in self.mapping:
            return self.mapping[self.DEFAULT_KEY]
        exc = PermanentBackendError(f"no scripted response for fingerprint {key}")
        exc.fingerprint = key  # type: ignore[attr-defined]
        exc.rendered = render_request(req)  # type: ignore[attr-defined]
        raise exc


class TokenBucket:
    """Blocking per-backend rate limiter honoring requests-per-minute."""

    def __init__(
        self,
        rpm_limit: int,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        self.capacity = float(rpm_limit)
        self.rate = rpm_limit / 60.0
        self._tokens = float(rpm_limit)
        self._clock = clock
        self._sleep = sleep
        self._last = clock()

    def acquire(self) -> None:
        now = self._clock()
        self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
        self._last = now
        if self._tokens < 1.0:
            wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)
            # Credit the waited time even if the injected sleep is a stub.
            self._last = now + wait
            self._tokens = 1.0
        self._tokens -= 1.0


# ── Gateway ──────────────────────────────────────────────────────────────


class LlmGateway:
    def __init__(
        self,
        profiles: Sequence[BackendProfile],
        backends: dict[str, ChatBackend],
        *,
        counter: TokenCounter = DEFAULT_COUNTER,
        template_dir: Path | None = None,
        scoring_with_examples: bool = False,
        max_retries: int = DEFAULT_MAX_RETRIES,
        backoff_seconds: float = DEFAULT_BACKOFF_SECONDS,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.monotonic,
    ) -> None:
        names = [p.name for p in profiles]
        if len(set(names)) != len(names):
            raise ValueError("duplicate profile names")
        missing = [n for n in names if n not in backends]
        if missing:
            raise ValueError(f"profiles without backend implementation: {missing}")
        self.profiles = list(profiles)
        self.counter = counter
        self.template_dir = template_dir
        self.scoring_with_examples = scoring_with_examples
        self.max_retries = max_retries
        self.backoff_seconds = backoff_seconds
        self._backends = dict(backends)
        self._sleep = sleep
        self._buckets = {p.name: TokenBucket(p.rpm_limit, clock=clock, sleep=sleep) for p in profiles}

    def count_tokens(self, text: str) -> int:
        return self.counter.count(text)

    def select_backend(self, needed_tokens: int, capability: str) -> BackendProfile:
        """Cheapest profile with the capability and a large enough window."""
        candidates = [
            p for p in self.profiles if capability in p.capabilities and p.max_tokens >= needed_tokens
        ]
        if not candidates:
            raise NoCapableBackend(f"no backend offers {capability!r} at {needed_tokens} tokens")
        return min(candidates, key=lambda p: (p.cost_rank, p.name))

    def chat(self, req: ChatRequest, profile: BackendProfile | str) -> str:
        if isinstance(profile, str):
            profile = self._profile(profile)
        needed = self.counter.count(render_request(req))
        if needed > profile.max_tokens:
            raise ContextOverflow(
                f"request needs ~{needed} tokens, {profile.name} allows {profile.max_tokens}"
            )
        backend = self._backends[profile.name]
        bucket = self._buckets[profile.name]
        last_error: TransientBackendError | None = None
        for attempt in range(self.max_retries + 1):
            bucket.acquire()
            try:
                return backend.complete(req)
            except TransientBackendError as exc:
                last_error = exc
                logger.warning("backend %s attempt %d failed: %s", profile.name, attempt + 1, exc)
                if attempt < self.max_retries:
                    self._sleep(self.backoff_seconds * (2**attempt))
            except PermanentBackendError as exc:
                raise BackendUnavailable(f"{profile.name}: {exc}") from exc
        raise BackendUnavailable(
            f"{profile.name} failed after {self.max_retries + 1} attempts: {last_error}"
        ) from last_error

    def generate(self, req: ChatRequest, *, needed_tokens: int | None = None) -> tuple[str, BackendProfile]:
        """Chat against the cheapest generation-capable backend that fits.

        When no generation profile has a large enough window, a long-context
        profile may serve the request instead (the oversized-search-result
        escape hatch).
        """
        needed = needed_tokens if needed_tokens is not None else self.counter.count(render_request(req))
        try:
            profile = self.select_backend(needed, CAP_GENERATION)
        except NoCapableBackend:
            profile = self.select_backend(needed, CAP_LONG_CONTEXT)
        return self.chat(req, profile), profile

    def score(self, template_id: str, *args: str, **kwargs: str) -> ScoreResult:
        """Render a scoring template, ask, and parse an integer score.

        One retry on an unparseable reply, then the call fails closed with
        UnscorableResponse.
        """
        if template_id == "is_question" and self.scoring_with_examples:
            template_id = "is_question_with_examples"
        prompt = prompts.render_template(template_id, *args, directory=self.template_dir, **kwargs)
        req = user_request(prompt)
        profile = self.select_backend(self.counter.count(render_request(req)), CAP_SCORING)
        raw = self.chat(req, profile)
        try:
            value = parse_score(raw)
        except ParseFailure:
            logger.info("unparseable score %r from %s, retrying once", raw, profile.name)
            raw = self.chat(req, profile)
            try:
                value = parse_score(raw)
            except ParseFailure as exc:
                raise UnscorableResponse(f"{profile.name} reply unparseable: {raw!r}") from exc
        return ScoreResult(value=value, raw_text=raw, backend=profile.name)

    def _profile(self, name: str) -> BackendProfile:
        for profile in self.profiles:
            if profile.name == name:
                return profile
        raise KeyError(f"unknown profile {name!r}")
