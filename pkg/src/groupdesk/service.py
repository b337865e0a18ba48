"""HTTP surface: JSON endpoints under /v1 plus a server-sent event stream.

Handlers validate by hand and delegate to the Engine; every error leaves
as ``{"error": code, "detail": ...}`` with a matching status code. A
background thread drives aggregation ticks so idle bundles flush without
traffic.
"""

from __future__ import annotations

import asyncio
import json
import logging
import queue
import threading
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse

from .errors import ConfigError, InvalidState, NotFound
from .pipeline import STATES
from .runtime import Engine

logger = logging.getLogger(__name__)

_POLL_SECONDS = 0.05


def _error(status: int, code: str, detail: str) -> JSONResponse:
    return JSONResponse({"error": code, "detail": detail}, status_code=status)


async def _body(request: Request) -> dict:
    try:
        data = await request.json()
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ValueError(f"invalid JSON body: {exc}") from exc
    if not isinstance(data, dict):
        raise ValueError("body must be a JSON object")
    return data


def create_app(engine: Engine, *, background_tick: bool = True) -> FastAPI:
    stop = threading.Event()

    def tick_loop() -> None:
        while not stop.wait(engine.cfg.tick_seconds):
            try:
                engine.tick()
            except Exception:
                logger.exception("tick failed")

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        worker = None
        if background_tick:
            worker = threading.Thread(target=tick_loop, name="tick", daemon=True)
            worker.start()
        try:
            yield
        finally:
            stop.set()
            if worker is not None:
                worker.join(timeout=2.0)

    app = FastAPI(lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.engine = engine

    @app.post("/v1/messages", status_code=202)
    async def post_message(request: Request):
        try:
            payload = await _body(request)
            return JSONResponse(engine.submit_message(payload), status_code=202)
        except ValueError as exc:
            return _error(400, "validation", str(exc))

    @app.get("/v1/replies")
    async def list_replies(group_id: str | None = None, state: str | None = None):
        if state is not None and state not in STATES:
            return _error(400, "validation", f"unknown state {state!r}")
        records = engine.replies.list(group_id=group_id, state=state)
        return {"replies": [r.to_dict() for r in records]}

    @app.get("/v1/replies/{reply_id}/trace")
    async def get_trace(reply_id: str):
        record = engine.replies.get(reply_id)
        if record is None:
            return _error(404, "not_found", f"no reply {reply_id!r}")
        return {"reply_id": record.reply_id, "state": record.state,
                "trace": [e.to_dict() for e in record.trace]}

    @app.post("/v1/withdraw/{reply_id}")
    async def post_withdraw(reply_id: str):
        try:
            return engine.withdraw(reply_id).to_dict()
        except NotFound as exc:
            return _error(404, "not_found", str(exc))
        except InvalidState as exc:
            return _error(409, "invalid_state", str(exc))

    @app.post("/v1/knowledge")
    async def post_knowledge(request: Request):
        try:
            payload = await _body(request)
            text = payload.get("text")
            if not isinstance(text, str) or not text.strip():
                raise ValueError("'text' must be a non-empty string")
            source_path = payload.get("source_path", "")
            if not isinstance(source_path, str):
                raise ValueError("'source_path' must be a string")
            include_rejection = payload.get("include_rejection", False)
            if not isinstance(include_rejection, bool):
                raise ValueError("'include_rejection' must be a boolean")
            return engine.add_knowledge(
                text, source_path, include_rejection=include_rejection
            )
        except ValueError as exc:
            return _error(400, "validation", str(exc))

    @app.get("/v1/config")
    async def get_config():
        return engine.config_view()

    @app.put("/v1/config")
    async def put_config(request: Request):
        try:
            payload = await _body(request)
            return engine.update_tunables(payload)
        except (ValueError, ConfigError) as exc:
            return _error(400, "validation", str(exc))

    @app.get("/v1/events")
    async def get_events(limit: int | None = None):
        # Thread-safe handoff: the store notifies from worker threads, the
        # generator drains from the event loop.
        events: queue.Queue = queue.Queue()
        unsubscribe = engine.replies.subscribe(
            lambda record: events.put(record.to_dict())
        )

        async def stream():
            sent = 0
            try:
                yield ": connected\n\n"
                while limit is None or sent < limit:
                    try:
                        item = events.get_nowait()
                    except queue.Empty:
                        await asyncio.sleep(_POLL_SECONDS)
                        continue
                    payload = json.dumps(item, ensure_ascii=False, sort_keys=True)
                    yield f"event: reply\ndata: {payload}\n\n"
                    sent += 1
            finally:
                unsubscribe()

        return StreamingResponse(stream(), media_type="text/event-stream",
                                 headers={"Cache-Control": "no-cache"})

    return app
