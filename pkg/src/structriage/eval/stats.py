"""Correlation, agreement and readability statistics."""

from __future__ import annotations

import math
import re
from collections import Counter
from typing import Hashable, Sequence

from ..errors import ConstantSeries, DegenerateAgreement, EmptyText, LengthMismatch


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation coefficient."""
    if len(xs) != len(ys):
        raise LengthMismatch(f"series lengths differ: {len(xs)} vs {len(ys)}")
    n = len(xs)
    if n < 2:
        raise LengthMismatch("need at least two observations")
    mx = math.fsum(xs) / n
    my = math.fsum(ys) / n
    dx = [x - mx for x in xs]
    dy = [y - my for y in ys]
    sxx = math.fsum(d * d for d in dx)
    syy = math.fsum(d * d for d in dy)
    if sxx == 0.0 or syy == 0.0:
        raise ConstantSeries("correlation is undefined for a constant series")
    r = math.fsum(a * b for a, b in zip(dx, dy)) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def cohens_kappa(a: Sequence[Hashable], b: Sequence[Hashable]) -> float:
    """Chance-corrected agreement between two raters over the same items."""
    if len(a) != len(b):
        raise LengthMismatch(f"rater lengths differ: {len(a)} vs {len(b)}")
    n = len(a)
    if n == 0:
        raise LengthMismatch("need at least one rated item")
    observed = sum(1 for x, y in zip(a, b) if x == y) / n
    ca, cb = Counter(a), Counter(b)
    expected = math.fsum(ca[label] * cb[label] for label in ca.keys() | cb.keys()) / (n * n)
    if expected == 1.0:
        raise DegenerateAgreement("both raters used a single identical label; kappa is undefined")
    return (observed - expected) / (1.0 - expected)


# Heuristics below are pinned so scores are reproducible:
# syllables = vowel groups (a e i o u y), minus a silent trailing 'e', at least 1;
# sentences end at . ! ? followed by whitespace or end of text.
_WORD = re.compile(r"[A-Za-z0-9]+(?:['’][A-Za-z]+)*")
_VOWEL_GROUP = re.compile(r"[aeiouy]+")
_SENTENCE_END = re.compile(r"[.!?]+(?=\s|$)")


def count_syllables(word: str) -> int:
    w = word.lower()
    groups = len(_VOWEL_GROUP.findall(w))
    if w.endswith("e") and groups > 0:
        groups -= 1
    return max(groups, 1)


def split_sentences(text: str) -> list[str]:
    pieces = _SENTENCE_END.split(text)
    return [p for p in pieces if _WORD.search(p)]


def flesch_reading_ease(text: str) -> float:
    words = _WORD.findall(text)
    if not words:
        raise EmptyText("text has no words")
    sentences = max(len(split_sentences(text)), 1)
    syllables = sum(count_syllables(w) for w in words)
    return 206.835 - 1.015 * (len(words) / sentences) - 84.6 * (syllables / len(words))
