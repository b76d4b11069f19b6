"""TF-IDF bag-of-n-grams features for the single-input baseline network."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError, EmptyResultError


def ngrams(tokens: Sequence[str], ngram_range: tuple[int, int] = (1, 3)) -> list[str]:
    lo, hi = ngram_range
    out = []
    for n in range(lo, hi + 1):
        out.extend(" ".join(tokens[i : i + n]) for i in range(len(tokens) - n + 1))
    return out


def smooth_idf(n_docs: int, df: int) -> float:
    return math.log((1 + n_docs) / (1 + df)) + 1.0


@dataclass(frozen=True)
class TfidfModel:
    features: tuple[str, ...]
    idf: np.ndarray
    scores: np.ndarray
    ngram_range: tuple[int, int] = (1, 3)
    n_docs: int = 0

    def __post_init__(self):
        object.__setattr__(self, "_index", {f: i for i, f in enumerate(self.features)})

    def __len__(self) -> int:
        return len(self.features)

    def index(self, feature: str) -> int:
        return self._index[feature]

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# ngram_range={self.ngram_range[0]},{self.ngram_range[1]} n_docs={self.n_docs}\n")
            fh.write("feature\tidf\tscore\n")
            for f, i, s in zip(self.features, self.idf.tolist(), self.scores.tolist()):
                fh.write(f"{f}\t{i!r}\t{s!r}\n")

    @classmethod
    def load(cls, path: str | Path) -> "TfidfModel":
        with open(path, encoding="utf-8") as fh:
            meta = dict(kv.split("=") for kv in fh.readline().lstrip("#").split())
            if fh.readline().rstrip("\n") != "feature\tidf\tscore":
                raise DataError(f"{path}: not a tf-idf model file")
            rows = [line.rstrip("\n").split("\t") for line in fh if line.strip()]
        lo, hi = (int(x) for x in meta["ngram_range"].split(","))
        return cls(
            tuple(r[0] for r in rows),
            np.array([float(r[1]) for r in rows]),
            np.array([float(r[2]) for r in rows]),
            (lo, hi),
            int(meta["n_docs"]),
        )


def fit_tfidf(corpus: Sequence[Sequence[str]], top_k: int = 1000, ngram_range: tuple[int, int] = (1, 3)) -> TfidfModel:
    """Select the ``top_k`` n-grams by total tf-idf mass over the training corpus.

    idf is the smoothed ``ln((1+N)/(1+df)) + 1``; ties in score fall back to
    lexicographic order so the feature list is deterministic.
    """
    if len(corpus) == 0:
        raise EmptyResultError("cannot fit tf-idf on an empty corpus")
    df: Counter = Counter()
    tf_total: Counter = Counter()
    for doc in corpus:
        counts = Counter(ngrams(doc, ngram_range))
        df.update(counts.keys())
        tf_total.update(counts)
    n = len(corpus)
    scored = [(g, tf_total[g] * smooth_idf(n, d)) for g, d in df.items()]
    scored.sort(key=lambda gs: (-gs[1], gs[0]))
    scored = scored[:top_k]
    feats = tuple(g for g, _ in scored)
    return TfidfModel(
        feats,
        np.array([smooth_idf(n, df[g]) for g in feats]),
        np.array([s for _, s in scored]),
        ngram_range,
        n,
    )


def transform_tfidf(tokens: Sequence[str], model: TfidfModel) -> dict[int, float]:
    """Sparse L2-normalised tf-idf vector as ``{feature index: weight}``."""
    counts = Counter(g for g in ngrams(tokens, model.ngram_range) if g in model._index)
    vec = {model.index(g): c * float(model.idf[model.index(g)]) for g, c in counts.items()}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    if norm == 0.0:
        return {}
    return {i: v / norm for i, v in sorted(vec.items())}


def tfidf_matrix(corpus: Sequence[Sequence[str]], model: TfidfModel) -> np.ndarray:
    out = np.zeros((len(corpus), len(model)))
    for r, doc in enumerate(corpus):
        for i, v in transform_tfidf(doc, model).items():
            out[r, i] = v
    return out
