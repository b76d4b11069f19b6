"""Tokenization, stopword filtering and frequency-thresholded vocabularies."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import EmptyResultError

_TOKEN_RE = re.compile(r"[0-9a-z]+")


def load_stopwords(path: str | Path | None = None) -> frozenset[str]:
    """One token per line, UTF-8. Without a path the bundled English list is used."""
    if path is None:
        text = resources.files("icdgroup.data").joinpath("stopwords_en.txt").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    return frozenset(w.strip().lower() for w in text.splitlines() if w.strip())


def preprocess_note(text: str, stoplist: Iterable[str] | None = None) -> list[str]:
    """Lowercase, split into alphanumeric runs, drop 1-character tokens and stopwords."""
    stop = load_stopwords() if stoplist is None else stoplist
    # ASCII only: \w would admit underscores and unicode letters.
    return [t for t in _TOKEN_RE.findall(text.lower()) if len(t) > 1 and t not in stop]


def preprocess_corpus(texts: Iterable[str], stoplist: Iterable[str] | None = None) -> list[list[str]]:
    stop = frozenset(load_stopwords() if stoplist is None else stoplist)
    return [preprocess_note(t, stop) for t in texts]


@dataclass(frozen=True)
class Vocabulary:
    tokens: tuple[str, ...]
    counts: tuple[int, ...]
    min_count: int

    def __post_init__(self):
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index(self, token: str) -> int:
        return self._index[token]

    def get(self, token: str, default=None):
        return self._index.get(token, default)

    def count(self, token: str) -> int:
        return self.counts[self._index[token]]

    def items(self):
        """(token, (index, count)) pairs in index order."""
        return ((t, (i, c)) for i, (t, c) in enumerate(zip(self.tokens, self.counts)))


def build_vocabulary(corpus: Iterable[Sequence[str]], min_count: int = 5) -> Vocabulary:
    """Keep tokens seen at least ``min_count`` times.

    Index order is descending count with ties broken lexicographically.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counter: Counter = Counter()
    for doc in corpus:
        counter.update(doc)
    kept = sorted(((t, c) for t, c in counter.items() if c >= min_count), key=lambda tc: (-tc[1], tc[0]))
    if not kept:
        raise EmptyResultError(f"vocabulary is empty at min_count={min_count}")
    tokens, counts = zip(*kept)
    return Vocabulary(tuple(tokens), tuple(counts), min_count)
