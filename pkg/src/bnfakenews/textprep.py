"""Bengali text cleaning, stopword removal, the word-count filter and frequency tables."""

from __future__ import annotations

import string
import sys
import unicodedata
from collections import Counter
from dataclasses import dataclass
from functools import cache
from pathlib import Path
from typing import Iterable

from .corpus import Article

DEFAULT_MIN_WORDS = 100

_BENGALI_DIGITS = "".join(chr(c) for c in range(0x09E6, 0x09F0))
_DANDA = "।॥"


@cache
def _removal_table() -> dict[int, int | None]:
    table: dict[int, int | None] = {}
    for ch in string.punctuation + string.digits + _BENGALI_DIGITS + _DANDA:
        table[ord(ch)] = None
    for cp in range(sys.maxunicode + 1):
        cat = unicodedata.category(chr(cp))
        if cat == "Cc":
            table[cp] = ord(" ")
        elif cat.startswith("P"):
            table[cp] = None
    return table


class Filtered:
    """An article dropped by the word-count filter."""

    __slots__ = ("article_id", "label", "reason", "word_count")

    def __init__(self, article_id: str, label: int, reason: str, word_count: int):
        self.article_id = article_id
        self.label = label
        self.reason = reason
        self.word_count = word_count

    def __repr__(self):
        return f"Filtered({self.article_id!r}, {self.reason}, words={self.word_count})"


@dataclass(frozen=True)
class StopwordList:
    words: frozenset[str]

    def __post_init__(self):
        if not self.words:
            raise ValueError("stopword list is empty")
        for w in self.words:
            if not w or any(ch.isspace() for ch in w):
                raise ValueError(f"invalid stopword {w!r}")

    def __contains__(self, word: str) -> bool:
        return word in self.words

    def __len__(self) -> int:
        return len(self.words)

    @classmethod
    def of(cls, words: Iterable[str]) -> "StopwordList":
        return cls(frozenset(words))

    @classmethod
    def load(cls, path) -> "StopwordList":
        """Newline-delimited UTF-8 list; blank lines and ``#`` comments are skipped."""
        words = []
        for line in Path(path).read_text(encoding="utf-8-sig").splitlines():
            line = line.strip()
            if line and not line.startswith("#"):
                words.append(line)
        return cls.of(words)


@dataclass(frozen=True)
class CleanDocument:
    article_id: str
    tokens: tuple[str, ...]
    label: int


def clean_text(raw: str) -> str:
    """Strip control characters, punctuation (incl. danda) and digits; collapse spaces.

    Control characters become spaces, the rest are deleted outright. Bengali letters,
    vowel signs and virama are untouched.

    >>> clean_text("খবর\\t২০২৩।")
    'খবর'
    """
    return " ".join(raw.translate(_removal_table()).split())


def tokenize_words(cleaned: str) -> list[str]:
    return [tok for tok in cleaned.split(" ") if tok]


def remove_stopwords(tokens: list[str], stops: StopwordList) -> list[str]:
    return [tok for tok in tokens if tok not in stops]


def word_count_filter(tokens, threshold: int = DEFAULT_MIN_WORDS) -> bool:
    """True when the article is long enough to keep (inclusive boundary)."""
    return len(tokens) >= threshold


def preprocess_article(
    a: Article,
    stops: StopwordList,
    threshold: int = DEFAULT_MIN_WORDS,
    count_before_stopwords: bool = True,
) -> CleanDocument | Filtered:
    tokens = tokenize_words(clean_text(a.content))
    kept = remove_stopwords(tokens, stops)
    counted = tokens if count_before_stopwords else kept
    if not word_count_filter(counted, threshold):
        return Filtered(a.article_id, a.label, "below_threshold", len(counted))
    return CleanDocument(a.article_id, tuple(kept), a.label)


def term_frequencies(docs, top_k: int | None = None) -> list[tuple[str, int]]:
    """Token counts over ``docs``, ordered by count desc then token asc.

    ``docs`` may hold :class:`CleanDocument` objects or plain token lists.
    """
    counts: Counter[str] = Counter()
    for doc in docs:
        counts.update(doc.tokens if isinstance(doc, CleanDocument) else doc)
    table = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return table if top_k is None else table[:top_k]


def write_frequency_tsv(table: list[tuple[str, int]], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for token, count in table:
            fh.write(f"{token}\t{count}\n")
