import math
import random

import pytest

from groupdesk.tokens import TokenCounter, count_tokens


def test_empty_string_counts_zero() -> None:
    assert count_tokens("") == 0


def test_thirty_five_chars_at_default_ratio() -> None:
    text = "x" * 35
    assert count_tokens(text) == math.ceil(35 / 3.5)
    assert count_tokens(text) == 10


def test_custom_ratio() -> None:
    counter = TokenCounter(chars_per_token=2.0)
    assert counter.count("abcd") == 2
    assert counter.count("abcde") == 3


def test_ratio_must_be_positive() -> None:
    with pytest.raises(ValueError):
        TokenCounter(chars_per_token=0)


def test_count_monotone_in_length() -> None:
    rng = random.Random(7)
    for _ in range(200):
        n = rng.randrange(0, 500)
        assert count_tokens("a" * n) <= count_tokens("a" * (n + 1))
        assert count_tokens("a" * n) >= 0
