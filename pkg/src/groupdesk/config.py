"""Service configuration: one declarative file, TOML or JSON.

Everything tunable lives here; the schema is documented in the README.
Paths are resolved relative to the config file's directory so a workspace
can be moved wholesale. Thresholds and working hours are hot-reloadable
through the API; stores, backends, and network topology are boot-time.
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError
from .llm import BackendProfile
from .pipeline import WorkingHours
from .preprocess import PreprocessConfig
from .retrieval import RepoRoute

_TOP_LEVEL_KEYS = {
    "service", "thresholds", "working_hours", "preprocess", "budgets",
    "embedding", "backends", "stores", "routes", "web_search", "moderation",
    "webhook", "paging",
}


@dataclass
class Thresholds:
    theta_sim: float = 0.45
    theta_q: int = 6
    theta_rel: int = 5
    theta_ans: int = 5
    theta_sec: int = 7

    def validate(self) -> None:
        if not -1.0 <= self.theta_sim <= 1.0:
            raise ConfigError(f"theta_sim {self.theta_sim} outside [-1, 1]")
        for name in ("theta_q", "theta_rel", "theta_ans", "theta_sec"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or not 0 <= value <= 10:
                raise ConfigError(f"{name} must be an integer in [0, 10], got {value!r}")

    def to_dict(self) -> dict:
        return {
            "theta_sim": self.theta_sim,
            "theta_q": self.theta_q,
            "theta_rel": self.theta_rel,
            "theta_ans": self.theta_ans,
            "theta_sec": self.theta_sec,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Thresholds":
        unknown = set(data) - set(cls().to_dict())
        if unknown:
            raise ConfigError(f"unknown threshold keys: {sorted(unknown)}")
        sim = data.get("theta_sim", 0.45)
        if isinstance(sim, bool) or not isinstance(sim, (int, float)):
            raise ConfigError(f"theta_sim must be a number, got {sim!r}")
        t = cls(
            theta_sim=float(sim),
            theta_q=data.get("theta_q", 6),
            theta_rel=data.get("theta_rel", 5),
            theta_ans=data.get("theta_ans", 5),
            theta_sec=data.get("theta_sec", 7),
        )
        t.validate()
        return t


@dataclass
class ServiceConfig:
    base_dir: Path
    host: str = "127.0.0.1"
    port: int = 8080
    tick_seconds: float = 1.0
    thresholds: Thresholds = field(default_factory=Thresholds)
    working_hours: WorkingHours | None = None
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    budget_tokens: int = 16000
    reserve_tokens: int = 2000
    long_budget_tokens: int = 32000
    embedding_kind: str = "mock"
    embedding_dim: int = 384
    embedding_endpoint: str = ""
    backends: list[BackendProfile] = field(default_factory=list)
    rejection_store: Path = Path("stores/rejection")
    response_store: Path = Path("stores/response")
    replies_dir: Path = Path("replies")
    routes: dict[str, RepoRoute] = field(default_factory=dict)
    web_search_endpoint: str | None = None
    moderation_url: str | None = None
    webhook_url: str | None = None
    paging_enabled: bool = False

    def validate(self) -> None:
        self.thresholds.validate()
        if not 1 <= self.port <= 65535:
            raise ConfigError(f"port {self.port} out of range")
        if self.tick_seconds <= 0:
            raise ConfigError("tick_seconds must be positive")
        if self.reserve_tokens < 0:
            raise ConfigError("reserve_tokens must be non-negative")
        if self.budget_tokens <= self.reserve_tokens:
            raise ConfigError("budget_tokens must exceed reserve_tokens")
        if self.long_budget_tokens < self.budget_tokens:
            raise ConfigError("long_budget_tokens must be >= budget_tokens")
        if self.embedding_kind not in ("mock", "http"):
            raise ConfigError(f"embedding kind {self.embedding_kind!r} not supported")
        if self.embedding_kind == "http" and not self.embedding_endpoint:
            raise ConfigError("http embedding requires an endpoint")
        if self.embedding_dim < 1:
            raise ConfigError("embedding dim must be positive")
        if not self.backends:
            raise ConfigError("at least one backend is required")
        names = [p.name for p in self.backends]
        if len(names) != len(set(names)):
            raise ConfigError("backend names must be unique")
        for profile in self.backends:
            if not profile.endpoint.startswith(("scripted:", "http://", "https://")):
                raise ConfigError(f"backend {profile.name}: unsupported endpoint {profile.endpoint!r}")
        stores = [self.rejection_store, self.response_store, self.replies_dir]
        if len({str(p) for p in stores}) != len(stores):
            raise ConfigError("rejection, response, and replies paths must be distinct")
        if self.preprocess.min_query_chars < 0:
            raise ConfigError("min_query_chars must be non-negative")
        if self.preprocess.aggregation_window_seconds <= 0:
            raise ConfigError("aggregation_window_seconds must be positive")
        if self.preprocess.idle_flush_seconds < 0:
            raise ConfigError("idle_flush_seconds must be non-negative")
        if self.preprocess.max_bundle_chars < 1:
            raise ConfigError("max_bundle_chars must be positive")

    def resolve(self, path: str | Path) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _working_hours_from(data: dict) -> WorkingHours:
    try:
        return WorkingHours(
            start_minute=data["start_minute"],
            end_minute=data["end_minute"],
            timezone=data.get("timezone", "UTC"),
        )
    except KeyError as exc:
        raise ConfigError(f"working_hours missing key {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"working_hours invalid: {exc}") from exc


def _backend_from(data: dict) -> BackendProfile:
    try:
        return BackendProfile(
            name=data["name"],
            endpoint=data["endpoint"],
            max_tokens=data["max_tokens"],
            capabilities=frozenset(data["capabilities"]),
            cost_rank=data["cost_rank"],
            rpm_limit=data.get("rpm_limit", 600),
        )
    except KeyError as exc:
        raise ConfigError(f"backend missing key {exc}") from exc
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"backend invalid: {exc}") from exc


def _route_from(group_id: str, data: dict) -> RepoRoute:
    try:
        return RepoRoute(
            group_id=group_id,
            repo_name=data["repo_name"],
            search_root=data["search_root"],
            doc_domains=tuple(data.get("doc_domains", ())),
        )
    except KeyError as exc:
        raise ConfigError(f"route {group_id!r} missing key {exc}") from exc


def config_from_dict(data: dict, base_dir: str | Path) -> ServiceConfig:
    unknown = set(data) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    service = data.get("service", {})
    stores = data.get("stores", {})
    budgets = data.get("budgets", {})
    embedding = data.get("embedding", {})
    try:
        preprocess = PreprocessConfig(**data.get("preprocess", {}))
    except TypeError as exc:
        raise ConfigError(f"preprocess invalid: {exc}") from exc
    cfg = ServiceConfig(
        base_dir=Path(base_dir),
        host=service.get("host", "127.0.0.1"),
        port=service.get("port", 8080),
        tick_seconds=service.get("tick_seconds", 1.0),
        thresholds=Thresholds.from_dict(data.get("thresholds", {})),
        working_hours=_working_hours_from(data["working_hours"]) if "working_hours" in data else None,
        preprocess=preprocess,
        budget_tokens=budgets.get("budget_tokens", 16000),
        reserve_tokens=budgets.get("reserve_tokens", 2000),
        long_budget_tokens=budgets.get("long_budget_tokens", 32000),
        embedding_kind=embedding.get("kind", "mock"),
        embedding_dim=embedding.get("dim", 384),
        embedding_endpoint=embedding.get("endpoint", ""),
        backends=[_backend_from(b) for b in data.get("backends", [])],
        rejection_store=Path(stores.get("rejection", "stores/rejection")),
        response_store=Path(stores.get("response", "stores/response")),
        replies_dir=Path(stores.get("replies", "replies")),
        routes={gid: _route_from(gid, r) for gid, r in data.get("routes", {}).items()},
        web_search_endpoint=data.get("web_search", {}).get("endpoint") or None,
        moderation_url=data.get("moderation", {}).get("url") or None,
        webhook_url=data.get("webhook", {}).get("url") or None,
        paging_enabled=data.get("paging", {}).get("enabled", False),
    )
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ServiceConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    else:
        try:
            data = tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: invalid TOML: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a table")
    return config_from_dict(data, path.resolve().parent)


# ── hot-reloadable tunables ──────────────────────────────────────────────


def tunables_view(thresholds: Thresholds, working_hours: WorkingHours | None) -> dict:
    hours = None
    if working_hours is not None:
        hours = {
            "start_minute": working_hours.start_minute,
            "end_minute": working_hours.end_minute,
            "timezone": working_hours.timezone,
        }
    return {"thresholds": thresholds.to_dict(), "working_hours": hours}


def parse_tunables(body: dict) -> tuple[Thresholds, WorkingHours | None]:
    if not isinstance(body, dict):
        raise ConfigError("body must be an object")
    unknown = set(body) - {"thresholds", "working_hours"}
    if unknown:
        raise ConfigError(f"unknown tunable keys: {sorted(unknown)}")
    if "thresholds" not in body:
        raise ConfigError("missing 'thresholds'")
    if not isinstance(body["thresholds"], dict):
        raise ConfigError("'thresholds' must be an object")
    thresholds = Thresholds.from_dict(body["thresholds"])
    hours_data = body.get("working_hours")
    hours = None
    if hours_data is not None:
        if not isinstance(hours_data, dict):
            raise ConfigError("'working_hours' must be an object or null")
        hours = _working_hours_from(hours_data)
    return thresholds, hours
