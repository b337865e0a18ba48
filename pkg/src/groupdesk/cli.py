"""Command line: serve, ingest, query, eval-reject, withdraw.

Config resolution order: --config flag, then HXD_CONFIG, then ./config.toml.
Exit codes: 0 success, 1 runtime failure, 2 missing or invalid config,
3 malformed evaluation corpus (with the offending line number).
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from .config import ServiceConfig, load_config
from .errors import ConfigError, DegenerateCorpus, EngineError
from .rejection import LabeledQuery
from .runtime import Engine

DEFAULT_CONFIG = "config.toml"


def _record_json(record) -> str:
    return json.dumps(record.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)


def _load(args: argparse.Namespace) -> ServiceConfig:
    path = args.config or os.environ.get("HXD_CONFIG") or DEFAULT_CONFIG
    return load_config(path)


def _read_corpus(path: Path) -> list[LabeledQuery]:
    queries: list[LabeledQuery] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            text = entry["text"]
            label = entry["is_domain_question"]
            if not isinstance(text, str) or not text.strip():
                raise ValueError("'text' must be a non-empty string")
            if not isinstance(label, bool):
                raise ValueError("'is_domain_question' must be a boolean")
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise _CorpusError(lineno, str(exc)) from exc
        queries.append(LabeledQuery(text=text, is_domain_question=label))
    return queries


class _CorpusError(Exception):
    def __init__(self, lineno: int, detail: str) -> None:
        super().__init__(f"line {lineno}: {detail}")
        self.lineno = lineno


def cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    cfg = _load(args)
    engine = Engine(cfg)
    app = create_app(engine)
    uvicorn.run(app, host=cfg.host, port=cfg.port, log_level="warning")
    return 0


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load(args)
    engine = Engine(cfg)
    directory = Path(args.directory)
    if not directory.is_dir():
        print(f"not a directory: {directory}", file=sys.stderr)
        return 1
    summary = engine.ingest(directory, store=args.store)
    print(json.dumps(dataclasses.asdict(summary), sort_keys=True))
    return 0


def cmd_query(args: argparse.Namespace) -> int:
    cfg = _load(args)
    engine = Engine(cfg)
    record = engine.query_once(args.group, args.user, args.text)
    print(_record_json(record))
    return 0


def cmd_eval_reject(args: argparse.Namespace) -> int:
    cfg = _load(args)
    engine = Engine(cfg)
    corpus_path = Path(args.corpus)
    if not corpus_path.is_file():
        print(f"corpus not found: {corpus_path}", file=sys.stderr)
        return 3
    try:
        corpus = _read_corpus(corpus_path)
        if not corpus:
            print("corpus is empty", file=sys.stderr)
            return 3
        report = engine.rejection.evaluate(corpus)
    except _CorpusError as exc:
        print(f"malformed corpus: {exc}", file=sys.stderr)
        return 3
    except DegenerateCorpus as exc:
        print(f"cannot evaluate: {exc}", file=sys.stderr)
        return 3
    print(report.to_tsv(), end="")
    return 0


def cmd_withdraw(args: argparse.Namespace) -> int:
    cfg = _load(args)
    engine = Engine(cfg)
    record = engine.withdraw(args.reply_id)
    print(_record_json(record))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="groupdesk",
        description="Group-chat technical assistant: serve, ingest, query, evaluate.",
    )
    parser.add_argument("--config", help="config file path (overrides HXD_CONFIG)")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("serve", help="run the HTTP service").set_defaults(func=cmd_serve)

    p = sub.add_parser("ingest", help="index a directory of documents")
    p.add_argument("--store", choices=("rejection", "response"), default="response")
    p.add_argument("directory")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("query", help="run one query through the pipeline")
    p.add_argument("text")
    p.add_argument("--group", default="cli")
    p.add_argument("--user", default="operator")
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("eval-reject", help="threshold sweep over a labeled corpus")
    p.add_argument("corpus")
    p.set_defaults(func=cmd_eval_reject)

    p = sub.add_parser("withdraw", help="withdraw a sent reply")
    p.add_argument("reply_id")
    p.set_defaults(func=cmd_withdraw)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
