"""Token accounting used for context budgets and backend selection.

Counting is a deterministic character-ratio estimate, not a model
tokenizer: budgets only need a stable upper-bound-ish figure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

DEFAULT_CHARS_PER_TOKEN = 3.5


@dataclass(frozen=True)
class TokenCounter:
    chars_per_token: float = DEFAULT_CHARS_PER_TOKEN

    def __post_init__(self) -> None:
        if self.chars_per_token <= 0:
            raise ValueError("chars_per_token must be positive")

    def count(self, text: str) -> int:
        if not text:
            return 0
        return math.ceil(len(text) / self.chars_per_token)


DEFAULT_COUNTER = TokenCounter()


def count_tokens(text: str) -> int:
    return DEFAULT_COUNTER.count(text)
