"""Word embedding tables, skipgram training and averaged document vectors."""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numba
import numpy as np

from .errors import DataError, EmptyResultError
from .text import build_vocabulary

log = logging.getLogger(__name__)

EMBEDDING_DIM = 200


@dataclass
class EmbeddingTable:
    tokens: tuple[str, ...]
    vectors: np.ndarray  # (V, dimension) float64
    source: str = "pretrained"  # or "trained"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.tokens):
            raise DataError(f"vectors shape {self.vectors.shape} does not match {len(self.tokens)} tokens")
        self._index = {}
        for i, t in enumerate(self.tokens):
            if t in self._index:
                raise DataError(f"duplicate token {t!r} in embedding table")
            self._index[t] = i

    @property
    def dimension(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[self._index[token]]

    def get_index(self, token: str, default=None):
        return self._index.get(token, default)

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(f"{len(self.tokens)} {self.dimension}\n".encode())
        h.update("\n".join(self.tokens).encode("utf-8"))
        h.update(np.ascontiguousarray(self.vectors, dtype="<f8").tobytes())
        return h.hexdigest()

    def save(self, path: str | Path) -> None:
        """Write word2vec text format; ``repr`` floats so a reload is exact."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"{len(self.tokens)} {self.dimension}\n")
            for tok, row in zip(self.tokens, self.vectors.tolist()):
                fh.write(tok + " " + " ".join(map(repr, row)) + "\n")


def load_pretrained(path: str | Path, expected_dim: int = EMBEDDING_DIM, source: str = "pretrained") -> EmbeddingTable:
    """Load a word2vec text-format file (header ``"V D"``, then ``token v1 .. vD``)."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"embedding file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        if len(header) != 2 or not all(h.isdigit() for h in header):
            raise DataError(f"{path}: line 1: expected header 'V D', got {' '.join(header)!r}")
        n_words, dim = int(header[0]), int(header[1])
        if dim != expected_dim:
            raise DataError(f"{path}: dimension mismatch, file has {dim}, expected {expected_dim}")
        tokens: list[str] = []
        seen: dict[str, int] = {}
        vectors = np.empty((n_words, dim), dtype=np.float64)
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if parts == [""]:
                continue
            if len(tokens) == n_words:
                raise DataError(f"{path}: line {lineno}: more entries than the {n_words} declared")
            if len(parts) != dim + 1:
                raise DataError(f"{path}: line {lineno}: expected {dim} values, got {len(parts) - 1}")
            tok = parts[0]
            if tok in seen:
                raise DataError(f"{path}: line {lineno}: duplicate token {tok!r} (first on line {seen[tok]})")
            try:
                vectors[len(tokens)] = [float(v) for v in parts[1:]]
            except ValueError:
                raise DataError(f"{path}: line {lineno}: non-numeric vector value") from None
            seen[tok] = lineno
            tokens.append(tok)
    if len(tokens) != n_words:
        raise DataError(f"{path}: header declares {n_words} entries, found {len(tokens)}")
    return EmbeddingTable(tuple(tokens), vectors, source)


@dataclass(frozen=True)
class SkipgramConfig:
    dimension: int = EMBEDDING_DIM
    initial_learning_rate: float = 0.025
    min_learning_rate: float = 1e-4
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    min_count: int = 5
    subsample_threshold: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.dimension <= 0:
            raise ValueError("dimension must be positive")
        if self.negatives < 1:
            raise ValueError("negatives must be >= 1")
        if self.window < 1 or self.epochs < 1:
            raise ValueError("window and epochs must be >= 1")
        if self.initial_learning_rate <= 0:
            raise ValueError("initial_learning_rate must be positive")


@numba.njit(cache=True)
def _log_sigmoid(x):
    if x >= 0:
        return -math.log1p(math.exp(-x))
    return x - math.log1p(math.exp(x))


@numba.njit(cache=True)
def _sgns_epoch(w_in, w_out, centers, contexts, negatives, alphas):
    """Sequential SGD over (center, context) pairs; returns the summed loss."""
    dim = w_in.shape[1]
    neu1e = np.empty(dim)
    total = 0.0
    for p in range(centers.shape[0]):
        c = centers[p]
        alpha = alphas[p]
        neu1e[:] = 0.0
        for k in range(negatives.shape[1] + 1):
            if k == 0:
                target = contexts[p]
                label = 1.0
            else:
                target = negatives[p, k - 1]
                if target == contexts[p]:
                    continue
                label = 0.0
            f = 0.0
            for d in range(dim):
                f += w_in[c, d] * w_out[target, d]
            total -= _log_sigmoid(f) if label == 1.0 else _log_sigmoid(-f)
            sig = 1.0 / (1.0 + math.exp(-f)) if f > -700.0 else 0.0
            g = (label - sig) * alpha
            for d in range(dim):
                neu1e[d] += g * w_out[target, d]
                w_out[target, d] += g * w_in[c, d]
        for d in range(dim):
            w_in[c, d] += neu1e[d]
    return total


def _epoch_pairs(ids, doc_of, raw_pos, keep, shrink, window):
    """Center/context pairs from a symmetric window that never crosses documents.

    ``shrink`` gives each kept center its reduced window (1..window). Pairs are
    ordered by center position, then context position, as a sequential pass
    over the text would visit them.
    """
    kept = np.flatnonzero(keep)
    k_ids = ids[kept]
    k_doc = doc_of[kept]
    k_pos = raw_pos[kept]
    n = kept.size
    centers, contexts, order_c, order_o = [], [], [], []
    for off in range(1, window + 1):
        for sign in (-1, 1):
            if n <= off:
                continue
            if sign > 0:
                ci = np.arange(0, n - off)
            else:
                ci = np.arange(off, n)
            oi = ci + sign * off
            ok = (shrink[ci] >= off) & (k_doc[ci] == k_doc[oi])
            ci, oi = ci[ok], oi[ok]
            centers.append(ci)
            contexts.append(oi)
    if not centers:
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty, empty
    ci = np.concatenate(centers)
    oi = np.concatenate(contexts)
    order = np.lexsort((oi, ci))
    ci, oi = ci[order], oi[order]
    return k_ids[ci], k_ids[oi], k_pos[ci]


def train_skipgram(corpus: Sequence[Sequence[str]], config: SkipgramConfig | None = None) -> EmbeddingTable:
    """Skipgram with negative sampling over tokenized documents.

    Single worker and fully seeded, so a fixed config reproduces the table
    exactly. The returned vectors are the center-word (input) embeddings;
    per-epoch mean loss is stored in ``meta["epoch_loss"]``.
    """
    config = config or SkipgramConfig()
    try:
        vocab = build_vocabulary(corpus, config.min_count)
    except EmptyResultError:
        raise EmptyResultError(f"skipgram vocabulary is empty at min_count={config.min_count}") from None
    V, D = len(vocab), config.dimension

    ids_list, doc_list = [], []
    for d, doc in enumerate(corpus):
        idx = [vocab.get(t) for t in doc]
        idx = [i for i in idx if i is not None]
        ids_list.append(np.asarray(idx, dtype=np.int64))
        doc_list.append(np.full(len(idx), d, dtype=np.int64))
    ids = np.concatenate(ids_list) if ids_list else np.zeros(0, dtype=np.int64)
    doc_of = np.concatenate(doc_list) if doc_list else np.zeros(0, dtype=np.int64)
    n_tokens = ids.size
    raw_pos = np.arange(n_tokens, dtype=np.int64)

    counts = np.asarray(vocab.counts, dtype=np.float64)
    if config.subsample_threshold > 0:
        thresh = config.subsample_threshold * n_tokens
        keep_prob = np.minimum(1.0, (np.sqrt(counts / thresh) + 1.0) * thresh / counts)
    else:
        keep_prob = np.ones(V)
    noise = counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    rng = np.random.default_rng(config.seed)
    w_in = (rng.random((V, D)) - 0.5) / D
    w_out = np.zeros((V, D))
    total_words = n_tokens * config.epochs
    epoch_loss = []
    for epoch in range(config.epochs):
        keep = rng.random(n_tokens) < keep_prob[ids]
        shrink = config.window - rng.integers(0, config.window, size=int(keep.sum()))
        centers, contexts, pos = _epoch_pairs(ids, doc_of, raw_pos, keep, shrink, config.window)
        negs = np.searchsorted(noise_cdf, rng.random((centers.size, config.negatives)), side="right")
        negs = np.minimum(negs, V - 1).astype(np.int64)
        progress = (epoch * n_tokens + pos) / max(total_words, 1)
        alphas = np.maximum(config.min_learning_rate, config.initial_learning_rate * (1.0 - progress))
        loss = _sgns_epoch(w_in, w_out, centers, contexts, negs, alphas)
        mean = loss / max(centers.size, 1)
        epoch_loss.append(float(mean))
        log.debug("skipgram epoch %d: %d pairs, mean loss %.4f", epoch + 1, centers.size, mean)
    return EmbeddingTable(
        vocab.tokens,
        w_in,
        source="trained",
        meta={"epoch_loss": epoch_loss, "counts": list(vocab.counts), "config": config.__dict__.copy()},
    )


def embed_document(tokens: Sequence[str], table: EmbeddingTable) -> tuple[np.ndarray, float]:
    """Mean of the in-table token vectors and the fraction of tokens missing from the table."""
    if not tokens:
        return np.zeros(table.dimension), 1.0
    idx = [table.get_index(t) for t in tokens]
    hits = [i for i in idx if i is not None]
    oov = (len(tokens) - len(hits)) / len(tokens)
    if not hits:
        return np.zeros(table.dimension), 1.0
    return table.vectors[hits].mean(axis=0), oov


def vectorize_corpus(corpus: Sequence[Sequence[str]], table: EmbeddingTable, return_oov: bool = False):
    """Stack document vectors row by row in corpus order."""
    if len(corpus) == 0:
        raise EmptyResultError("cannot vectorize an empty corpus")
    out = np.empty((len(corpus), table.dimension))
    oov = np.empty(len(corpus))
    for i, doc in enumerate(corpus):
        out[i], oov[i] = embed_document(doc, table)
    if return_oov:
        return out, oov
    return out
