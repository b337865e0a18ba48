import base64
import hashlib
import random

import pytest

from groupdesk.errors import InvalidIdentifier, OcrUnavailable
from groupdesk.preprocess import (
    Aggregator,
    FilterDecision,
    NoopOcr,
    PreprocessConfig,
    RawMessage,
    ScriptedOcr,
    filter_message,
    make_user_key,
    split_user_key,
)


def _msg(
    content: str,
    *,
    ts: float = 0.0,
    kind: str = "text",
    user: str = "u1",
    group: str = "g1",
    mid: str | None = None,
    quoted: str | None = None,
) -> RawMessage:
    return RawMessage(
        message_id=mid or f"m{ts}",
        group_id=group,
        user_id=user,
        timestamp=ts,
        kind=kind,
        content=content,
        quoted_user=quoted,
    )


CFG = PreprocessConfig()


# ── user keys ────────────────────────────────────────────────────────────


def test_user_key_round_trip() -> None:
    key = make_user_key("g1", "u9")
    assert key == "g1|u9"
    assert split_user_key(key) == ("g1", "u9")


def test_user_key_rejects_separator() -> None:
    with pytest.raises(InvalidIdentifier):
        make_user_key("g|1", "u9")
    with pytest.raises(InvalidIdentifier):
        make_user_key("g1", "u|9")


def test_user_key_rejects_empty() -> None:
    with pytest.raises(InvalidIdentifier):
        make_user_key("", "u9")
    with pytest.raises(InvalidIdentifier):
        make_user_key("g1", "")


def test_user_key_round_trip_property() -> None:
    rng = random.Random(17)
    alphabet = "abcdefghijklmnopqrstuvwxyz0123456789_-"
    for _ in range(200):
        group = "".join(rng.choices(alphabet, k=rng.randrange(1, 12)))
        user = "".join(rng.choices(alphabet, k=rng.randrange(1, 12)))
        assert split_user_key(make_user_key(group, user)) == (group, user)


# ── message validity ─────────────────────────────────────────────────────


def test_unknown_kind_rejected() -> None:
    with pytest.raises(ValueError):
        _msg("hi", kind="sticker")


def test_quoted_user_only_on_quote_reply() -> None:
    with pytest.raises(ValueError):
        _msg("hi", kind="text", quoted="bob")
    with pytest.raises(ValueError):
        _msg("hi", kind="quote_reply")


# ── filtering ────────────────────────────────────────────────────────────


def test_filter_drops_non_text_kinds() -> None:
    for kind in ("video", "emoji", "voice"):
        decision = filter_message(_msg("whatever content", kind=kind), CFG)
        assert decision == FilterDecision(False, reason="non_text")


def test_filter_drops_short_text() -> None:
    decision = filter_message(_msg("ok"), CFG)
    assert not decision.kept
    assert decision.reason == "too_short"


def test_filter_trims_before_length_check() -> None:
    decision = filter_message(_msg("  hi    "), CFG)
    assert decision.reason == "too_short"


def test_filter_keeps_real_question() -> None:
    decision = filter_message(_msg("how do I install this?"), CFG)
    assert decision.kept
    assert decision.text == "how do I install this?"


def test_filter_quote_reply_to_other_user_dropped() -> None:
    decision = filter_message(_msg("what about this?", kind="quote_reply", quoted="carol"), CFG)
    assert decision.reason == "directed_elsewhere"


def test_filter_quote_reply_to_assistant_kept() -> None:
    decision = filter_message(
        _msg("what about this one?", kind="quote_reply", quoted=CFG.assistant_identity), CFG
    )
    assert decision.kept


def test_filter_image_with_default_ocr_dropped() -> None:
    decision = filter_message(_msg("aGVsbG8=", kind="image"), CFG)
    assert decision.reason == "too_short"


def test_filter_image_with_scripted_ocr_kept() -> None:
    image = b"\x89PNG fake bytes"
    ocr = ScriptedOcr({hashlib.sha256(image).hexdigest(): "CUDA out of memory"})
    assert ocr.extract(image) == "CUDA out of memory"
    msg = _msg(base64.b64encode(image).decode(), kind="image")
    decision = filter_message(msg, CFG, ocr=ocr)
    assert decision.kept
    assert decision.text == "CUDA out of memory"


def test_filter_image_short_ocr_text_dropped() -> None:
    image = b"img"
    ocr = ScriptedOcr({hashlib.sha256(image).hexdigest(): "ok"})
    decision = filter_message(_msg(base64.b64encode(image).decode(), kind="image"), CFG, ocr=ocr)
    assert decision.reason == "too_short"


class _TimeoutOcr:
    def extract(self, image: bytes) -> str:
        raise OcrUnavailable("timed out")


def test_filter_ocr_timeout_treated_as_empty() -> None:
    decision = filter_message(_msg("aGVsbG8=", kind="image"), CFG, ocr=_TimeoutOcr())
    assert not decision.kept
    assert decision.reason == "too_short"


def test_noop_ocr_returns_empty() -> None:
    assert NoopOcr().extract(b"any bytes at all") == ""


# ── aggregation ──────────────────────────────────────────────────────────


def test_two_close_messages_one_bundle() -> None:
    agg = Aggregator(CFG)
    assert agg.offer(_msg("how do I build", ts=0.0, mid="m1"), "how do I build") == []
    assert agg.offer(_msg("the gpu variant?", ts=10.0, mid="m2"), "the gpu variant?") == []
    bundles = agg.flush_all()
    assert len(bundles) == 1
    assert bundles[0].text == "how do I build\nthe gpu variant?"
    assert bundles[0].source_message_ids == ["m1", "m2"]
    assert bundles[0].window_start == 0.0
    assert bundles[0].window_end == 10.0


def test_idle_gap_splits_bundles() -> None:
    agg = Aggregator(CFG)
    agg.offer(_msg("first question here", ts=0.0), "first question here")
    flushed = agg.offer(_msg("second question here", ts=30.0), "second question here")
    assert len(flushed) == 1
    assert flushed[0].text == "first question here"
    rest = agg.flush_all()
    assert len(rest) == 1
    assert rest[0].text == "second question here"


def test_idle_flush_via_tick() -> None:
    agg = Aggregator(CFG)
    agg.offer(_msg("waiting for flush", ts=0.0), "waiting for flush")
    assert agg.tick(10.0) == []
    bundles = agg.tick(18.0)
    assert len(bundles) == 1
    assert bundles[0].text == "waiting for flush"
    assert agg.tick(30.0) == []


def test_window_limit_splits_bundles() -> None:
    cfg = PreprocessConfig(idle_flush_seconds=1000.0, aggregation_window_seconds=120.0)
    agg = Aggregator(cfg)
    for ts in (0.0, 60.0, 119.0):
        assert agg.offer(_msg(f"part at {ts}", ts=ts), f"part at {ts}") == []
    flushed = agg.offer(_msg("part at 121", ts=121.0), "part at 121")
    assert len(flushed) == 1
    assert flushed[0].window_end - flushed[0].window_start <= 120.0
    assert len(flushed[0].source_message_ids) == 3


def test_char_cap_flushes_immediately() -> None:
    cfg = PreprocessConfig(max_bundle_chars=50)
    agg = Aggregator(cfg)
    flushed = agg.offer(_msg("x" * 60, ts=0.0), "x" * 60)
    assert len(flushed) == 1
    assert flushed[0].text == "x" * 60
    assert agg.flush_all() == []


def test_distinct_user_keys_isolated() -> None:
    agg = Aggregator(CFG)
    agg.offer(_msg("question from alice", ts=0.0, user="alice"), "question from alice")
    agg.offer(_msg("question from bob", ts=1.0, user="bob"), "question from bob")
    bundles = sorted(agg.flush_all(), key=lambda b: b.user_key)
    assert [b.user_key for b in bundles] == ["g1|alice", "g1|bob"]
    assert all(len(b.source_message_ids) == 1 for b in bundles)


def test_aggregation_deterministic_for_fixed_stream() -> None:
    rng = random.Random(23)
    stream = []
    ts = 0.0
    for i in range(120):
        ts += rng.uniform(0.0, 25.0)
        user = rng.choice(["u1", "u2", "u3"])
        stream.append(_msg(f"message number {i} padded", ts=ts, user=user, mid=f"m{i}"))

    def run() -> list[tuple[str, str, tuple[str, ...]]]:
        agg = Aggregator(CFG)
        out = []
        for msg in stream:
            out.extend(agg.offer(msg, msg.content))
            out.extend(agg.tick(msg.timestamp))
        out.extend(agg.flush_all())
        return [(b.user_key, b.text, tuple(b.source_message_ids)) for b in out]

    assert run() == run()


def test_bundle_text_is_newline_join_of_sources() -> None:
    rng = random.Random(31)
    agg = Aggregator(PreprocessConfig())
    texts_by_key: dict[str, list[str]] = {}
    bundles = []
    ts = 0.0
    for i in range(60):
        ts += rng.uniform(0, 30)
        user = rng.choice(["a", "b"])
        text = f"padded message body {i}"
        msg = _msg(text, ts=ts, user=user, mid=f"m{i}")
        bundles.extend(agg.offer(msg, text))
        texts_by_key.setdefault(make_user_key("g1", user), []).append(text)
    bundles.extend(agg.flush_all())
    # Every bundle is the newline-join of its own sources, in order, and
    # all bundles for one key concatenate back to that key's full stream.
    rebuilt: dict[str, list[str]] = {}
    for b in bundles:
        parts = b.text.split("\n")
        assert len(parts) == len(b.source_message_ids)
        rebuilt.setdefault(b.user_key, []).extend(parts)
    assert rebuilt == texts_by_key
