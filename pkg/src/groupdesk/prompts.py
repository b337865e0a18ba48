"""Prompt template loading and rendering.

Templates live as versioned text files named ``<id>_v<N>.txt``; the loader
resolves a template id to its highest version. Rendering substitutes
``{}`` positionally and ``{name}`` by keyword in a single pass of literal
replacement, so user text containing braces can never corrupt a template.
"""

from __future__ import annotations

import re
from pathlib import Path

_PROMPT_DIR = Path(__file__).with_name("prompts")
_FILE_RE = re.compile(r"^(?P<id>[a-z0-9_]+?)_v(?P<version>\d+)\.txt$")
_PLACEHOLDER_RE = re.compile(r"\{([a-z_]*)\}")


def available_templates(directory: Path | None = None) -> dict[str, int]:
    """Map template id to its highest available version."""
    directory = directory or _PROMPT_DIR
    versions: dict[str, int] = {}
    for path in directory.glob("*.txt"):
        m = _FILE_RE.match(path.name)
        if not m:
            continue
        template_id, version = m.group("id"), int(m.group("version"))
        versions[template_id] = max(versions.get(template_id, 0), version)
    return versions


def load_template(template_id: str, directory: Path | None = None) -> str:
    directory = directory or _PROMPT_DIR
    version = available_templates(directory).get(template_id)
    if version is None:
        raise KeyError(f"unknown template {template_id!r}")
    text = (directory / f"{template_id}_v{version}.txt").read_text(encoding="utf-8")
    # Template files end with a newline the prompt itself does not carry.
    return text[:-1] if text.endswith("\n") else text


def render(template: str, *args: str, **kwargs: str) -> str:
    """Fill ``{}`` from ``args`` in order and ``{name}`` from ``kwargs``."""
    remaining = list(args)

    def fill(match: re.Match[str]) -> str:
        name = match.group(1)
        if name == "":
            if not remaining:
                raise ValueError("template has more {} placeholders than args")
            return remaining.pop(0)
        if name not in kwargs:
            raise ValueError(f"no value for placeholder {{{name}}}")
        return str(kwargs[name])

    rendered = _PLACEHOLDER_RE.sub(fill, template)
    if remaining:
        raise ValueError(f"{len(remaining)} positional args left unused")
    return rendered


def render_template(template_id: str, *args: str, directory: Path | None = None, **kwargs: str) -> str:
    return render(load_template(template_id, directory), *args, **kwargs)
