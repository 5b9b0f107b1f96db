"""Brute-force reference implementations used to check the library.

Nothing here imports the code under test; everything is recomputed from
first principles with exact arithmetic where it matters.
"""

from __future__ import annotations

import hashlib
import math
import re
from fractions import Fraction


def heuristic_tokens(text: str) -> int:
    return math.ceil(Fraction(4 * len(text.split()), 3))


def bucket_counts(text: str, dim: int = 256) -> list[int]:
    counts = [0] * dim
    for word in re.findall(r"\w+", text.lower()):
        h = int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest(), "big")
        counts[h % dim] += 1
    return counts


def signed_cos2(a: list[int], b: list[int]) -> Fraction:
    """sign(cos) * cos**2 as an exact rational; orders identically to cos."""
    dot = sum(x * y for x, y in zip(a, b))
    na = sum(x * x for x in a)
    nb = sum(y * y for y in b)
    value = Fraction(dot * dot, na * nb)
    return value if dot >= 0 else -value


def chunks(text: str, size: int = 100) -> list[str]:
    words = text.split()
    return [" ".join(words[i:i + size]) for i in range(0, len(words), size)]


def select_within_budget(query: str, texts: dict, budget: int, count=heuristic_tokens) -> list:
    """Full sort by exact similarity (ties to the smaller id), then greedy prefix fill.

    Returns a list of (id, text) pairs; the first entry is cut to the longest
    fitting word prefix when it alone exceeds the budget.
    """
    q = bucket_counts(query)
    ranked = sorted(texts, key=lambda i: (-signed_cos2(q, bucket_counts(texts[i])), i))
    picked, used = [], 0
    for n, i in enumerate(ranked):
        cost = count(texts[i])
        if used + cost <= budget:
            picked.append((i, texts[i]))
            used += cost
            continue
        if n == 0:
            words = texts[i].split()
            k = len(words)
            while k and count(" ".join(words[:k])) > budget:
                k -= 1
            picked.append((i, " ".join(words[:k])))
        break
    return picked
