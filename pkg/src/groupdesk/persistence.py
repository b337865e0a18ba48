"""Reply durability: an append-only change log plus a compact state file.

Every create or update of a ReplyRecord appends one JSON line (timestamp,
reply id, full record snapshot) to replies.log.jsonl and atomically
rewrites replies.json, which holds the current state of every record and
the id counter. Subscribers are notified after the write lands, so
anything observable through the store has already been logged.

Built for desk scale: one process, one writer, no database.
"""

from __future__ import annotations

import json
import logging
import os
import threading
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from .pipeline import ReplyRecord

logger = logging.getLogger(__name__)

LOG_FILE = "replies.log.jsonl"
STATE_FILE = "replies.json"


class ReplyStore:
    def __init__(self, root: str | Path | None = None, *, clock: Callable[[], datetime] | None = None) -> None:
        self._root = Path(root) if root is not None else None
        self._replies: dict[str, ReplyRecord] = {}
        self._next_id = 1
        self._subscribers: list[Callable[[ReplyRecord], None]] = []
        self._lock = threading.Lock()
        self._clock = clock or (lambda: datetime.now(timezone.utc))
        if self._root is not None:
            self._root.mkdir(parents=True, exist_ok=True)
            self._load()

    def __len__(self) -> int:
        return len(self._replies)

    # ── writes ───────────────────────────────────────────────────────────

    def create(self, user_key: str, query_text: str) -> ReplyRecord:
        with self._lock:
            reply_id = f"r{self._next_id:06d}"
            self._next_id += 1
            record = ReplyRecord(reply_id=reply_id, user_key=user_key, query_text=query_text)
            self._replies[reply_id] = record
            self._persist(record)
        self._notify(record)
        return record

    def update(self, record: ReplyRecord) -> None:
        with self._lock:
            if record.reply_id not in self._replies:
                raise KeyError(f"unknown reply {record.reply_id!r}")
            self._replies[record.reply_id] = record
            self._persist(record)
        self._notify(record)

    # ── reads ────────────────────────────────────────────────────────────

    def get(self, reply_id: str) -> ReplyRecord | None:
        return self._replies.get(reply_id)

    def list(self, group_id: str | None = None, state: str | None = None) -> list[ReplyRecord]:
        records = sorted(self._replies.values(), key=lambda r: r.reply_id)
        if group_id is not None:
            records = [r for r in records if r.group_id == group_id]
        if state is not None:
            records = [r for r in records if r.state == state]
        return records

    # ── change feed ──────────────────────────────────────────────────────

    def subscribe(self, callback: Callable[[ReplyRecord], None]) -> Callable[[], None]:
        self._subscribers.append(callback)

        def unsubscribe() -> None:
            if callback in self._subscribers:
                self._subscribers.remove(callback)

        return unsubscribe

    def _notify(self, record: ReplyRecord) -> None:
        for callback in list(self._subscribers):
            try:
                callback(record)
            except Exception as exc:
                logger.warning("reply subscriber failed: %s", exc)

    # ── disk ─────────────────────────────────────────────────────────────

    def _persist(self, record: ReplyRecord) -> None:
        if self._root is None:
            return
        line = json.dumps(
            {
                "timestamp": self._clock().isoformat(),
                "reply_id": record.reply_id,
                "record": record.to_dict(),
            },
            ensure_ascii=False,
        )
        with open(self._root / LOG_FILE, "a", encoding="utf-8") as fh:
            fh.write(line + "\n")
        state = {
            "next_id": self._next_id,
            "replies": {reply_id: rec.to_dict() for reply_id, rec in sorted(self._replies.items())},
        }
        data = json.dumps(state, ensure_ascii=False, indent=0).encode("utf-8")
        tmp = self._root / (STATE_FILE + ".tmp")
        tmp.write_bytes(data)
        os.replace(tmp, self._root / STATE_FILE)

    def _load(self) -> None:
        path = self._root / STATE_FILE
        if not path.exists():
            return
        state = json.loads(path.read_text(encoding="utf-8"))
        self._next_id = state["next_id"]
        self._replies = {
            reply_id: ReplyRecord.from_dict(data) for reply_id, data in state["replies"].items()
        }
