"""Optional external moderation service client.

The wire contract is a single POST `{"text": ...}` answered with
`{"flagged": bool}`. Callers treat an unreachable or malformed service as
a failure of the text under test — never as a pass.
"""

from __future__ import annotations

import httpx

from .errors import ModerationUnavailable


class HttpModeration:
    def __init__(self, url: str, client: httpx.Client | None = None, timeout: float = 10.0) -> None:
        self.url = url
        self._client = client or httpx.Client(timeout=timeout)

    def flagged(self, text: str) -> bool:
        try:
            resp = self._client.post(self.url, json={"text": text})
            resp.raise_for_status()
            verdict = resp.json()["flagged"]
        except (httpx.HTTPError, KeyError, TypeError, ValueError) as exc:
            raise ModerationUnavailable(f"moderation service failed: {exc}") from exc
        if not isinstance(verdict, bool):
            raise ModerationUnavailable(f"moderation service returned {verdict!r}")
        return verdict


class ScriptedModeration:
    """Deterministic stand-in: flag any text containing a listed needle."""

    def __init__(self, flagged_substrings: tuple[str, ...] = (), broken: bool = False) -> None:
        self.flagged_substrings = tuple(flagged_substrings)
        self.broken = broken

    def flagged(self, text: str) -> bool:
        if self.broken:
            raise ModerationUnavailable("scripted moderation marked broken")
        return any(needle in text for needle in self.flagged_substrings)
