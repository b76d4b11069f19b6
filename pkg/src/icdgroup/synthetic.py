"""Seeded desk-scale corpora in the MIMIC-III CSV schema.

Each admission is assigned a set of disease groups; its notes mix filler
words with keywords planted from those groups only, and its diagnosis rows
hold ICD9 codes drawn from the same groups. A matching stand-in for a
pretrained embedding file can be generated from the same configuration.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embed import EMBEDDING_DIM, EmbeddingTable
from .icd9 import N_GROUPS, GroupingTable
from .ingest import MIN_WORDS
from .text import load_stopwords

DEFAULT_PREVALENCE = (
    0.25, 0.20, 0.55, 0.30, 0.25, 0.20, 0.10, 0.70, 0.45, 0.35,
    0.35, 0.04, 0.12, 0.20, 0.05, 0.04, 0.40, 0.30, 0.50, 0.20,
)
_SENTENCE_WORDS = ("the", "and", "of", "with", "was", "is", "no", "on", "for", "in")


def default_keywords(per_group: int = 8) -> dict[int, list[str]]:
    return {g: [f"kw{g:02d}x{j:03d}" for j in range(per_group)] for g in range(1, N_GROUPS + 1)}


def default_filler(size: int = 400) -> list[str]:
    return [f"w{i:04d}" for i in range(size)]


@dataclass
class SyntheticConfig:
    n_notes: int = 2000
    n_admissions: int = 500
    prevalence: tuple[float, ...] = DEFAULT_PREVALENCE
    exclusive: bool = False  # exactly one group per admission, drawn by prevalence weight
    keywords: dict[int, list[str]] = field(default_factory=default_keywords)
    filler: list[str] = field(default_factory=default_filler)
    length_range: tuple[int, int] = (20, 50)
    keywords_per_group: tuple[int, int] = (3, 6)
    stopword_rate: float = 0.15
    error_rate: float = 0.01
    short_rate: float = 0.01
    other_category_rate: float = 0.0
    codes_per_group: tuple[int, int] = (1, 3)
    min_words: int = MIN_WORDS

    def validate(self) -> None:
        if len(self.prevalence) != N_GROUPS:
            raise ValueError(f"prevalence needs {N_GROUPS} entries")
        if not 1 <= self.n_admissions <= self.n_notes:
            raise ValueError("need 1 <= n_admissions <= n_notes")
        if self.length_range[0] < self.min_words or self.length_range[0] > self.length_range[1]:
            raise ValueError(f"length range {self.length_range} must start at >= {self.min_words} words")
        seen: dict[str, int] = {}
        stop = load_stopwords()
        for g, words in self.keywords.items():
            for w in words:
                if w in seen and seen[w] != g:
                    raise ValueError(f"keyword {w!r} is listed for groups {seen[w]} and {g}")
                if not (w.isalnum() and w == w.lower() and len(w) > 1) or w in stop:
                    raise ValueError(f"keyword {w!r} would not survive preprocessing")
                seen[w] = g
        overlap = set(self.filler) & set(seen)
        if overlap:
            raise ValueError(f"filler words overlap keywords: {sorted(overlap)[:5]}")


def _assign_groups(cfg: SyntheticConfig, rng: np.random.Generator) -> list[list[int]]:
    prev = np.asarray(cfg.prevalence, dtype=np.float64)
    weights = prev / prev.sum()
    out = []
    for _ in range(cfg.n_admissions):
        if cfg.exclusive:
            groups = [int(rng.choice(N_GROUPS, p=weights)) + 1]
        else:
            draw = rng.random(N_GROUPS) < prev
            groups = [int(g) + 1 for g in np.flatnonzero(draw)]
            if not groups:
                groups = [int(rng.choice(N_GROUPS, p=weights)) + 1]
        out.append(groups)
    return out


def _random_code(group: int, table: GroupingTable, rng: np.random.Generator) -> str:
    rule = next(r for r in table.rules if r.group_id == group)
    if rule.prefix == "V":
        return f"V{rng.integers(1, 92):02d}{rng.integers(0, 10)}"
    if rule.prefix == "E":
        return f"E{rng.integers(800, 1000):03d}{rng.integers(0, 10)}"
    return f"{rng.integers(rule.low, rule.high + 1):03d}{rng.integers(0, 10)}"


class _RoundRobin:
    """Draw keywords so that every keyword of a group is used equally often."""

    def __init__(self, words: list[str], rng: np.random.Generator):
        self.words = [words[i] for i in rng.permutation(len(words))]
        self.pos = 0

    def take(self, k: int) -> list[str]:
        out = []
        for _ in range(k):
            out.append(self.words[self.pos % len(self.words)])
            self.pos += 1
        return out


def _note_text(tokens: list[str], rng: np.random.Generator) -> str:
    parts = []
    sentence_len = 0
    for i, tok in enumerate(tokens):
        if sentence_len == 0:
            tok = tok.capitalize()
        parts.append(tok)
        sentence_len += 1
        if sentence_len >= 8 and rng.random() < 0.2 and i < len(tokens) - 1:
            parts[-1] += "." if rng.random() < 0.7 else ";"
            parts.append("\n" if rng.random() < 0.3 else "")
            sentence_len = 0
    return " ".join(p for p in parts if p != "").replace(" \n ", "\n") + "."


def generate_synthetic(config: SyntheticConfig, seed: int, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``NOTEEVENTS.csv`` and ``DIAGNOSES_ICD.csv`` into ``out_dir``.

    Output bytes depend only on ``config`` and ``seed``.
    """
    config.validate()
    rng = np.random.default_rng(seed)
    table = GroupingTable.default()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    groups = _assign_groups(config, rng)
    subject_of = []
    subject = 1000
    for a in range(config.n_admissions):
        if a == 0 or rng.random() > 0.15:  # some subjects have several admissions
            subject += 1
        subject_of.append(subject)
    hadm_of = [100000 + a for a in range(config.n_admissions)]

    per_adm = np.ones(config.n_admissions, dtype=np.int64)
    extra = config.n_notes - config.n_admissions
    if extra:
        per_adm += rng.multinomial(extra, np.full(config.n_admissions, 1.0 / config.n_admissions))

    pickers = {g: _RoundRobin(list(config.keywords.get(g, [])), rng) for g in range(1, N_GROUPS + 1)}
    filler = list(config.filler)
    stop_words = list(_SENTENCE_WORDS)

    notes_path = out_dir / "NOTEEVENTS.csv"
    diag_path = out_dir / "DIAGNOSES_ICD.csv"
    row_id = 1
    with open(notes_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(["ROW_ID", "SUBJECT_ID", "HADM_ID", "CATEGORY", "DESCRIPTION", "ISERROR", "TEXT"])
        for a in range(config.n_admissions):
            for _ in range(per_adm[a]):
                if rng.random() < config.short_rate:
                    length = int(rng.integers(3, config.min_words))
                else:
                    length = int(rng.integers(config.length_range[0], config.length_range[1] + 1))
                words = [
                    stop_words[rng.integers(len(stop_words))] if rng.random() < config.stopword_rate
                    else filler[rng.integers(len(filler))]
                    for _ in range(length)
                ]
                for g in groups[a]:
                    if not pickers[g].words:
                        continue
                    k = int(rng.integers(config.keywords_per_group[0], config.keywords_per_group[1] + 1))
                    for kw in pickers[g].take(k):
                        # overwrite a slot so the word count stays in range
                        words[int(rng.integers(len(words)))] = kw
                category = "Nursing" if rng.random() < config.other_category_rate else "Physician "
                is_error = "1" if rng.random() < config.error_rate else ""
                kind = ("Physician Resident Progress", "Intensivist", "Physician Attending Progress")[
                    int(rng.integers(3))
                ]
                w.writerow([row_id, subject_of[a], hadm_of[a], category, kind, is_error, _note_text(words, rng)])
                row_id += 1

    with open(diag_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["ROW_ID", "SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"])
        drow = 1
        for a in range(config.n_admissions):
            codes: list[str] = []
            for g in groups[a]:
                n = int(rng.integers(config.codes_per_group[0], config.codes_per_group[1] + 1))
                for _ in range(n):
                    c = _random_code(g, table, rng)
                    if c not in codes:
                        codes.append(c)
            for seq, c in enumerate(codes, start=1):
                w.writerow([drow, subject_of[a], hadm_of[a], seq, c])
                drow += 1
    return notes_path, diag_path


def admission_groups(config: SyntheticConfig, seed: int) -> list[list[int]]:
    """Group sets assigned to each admission, replaying the generator's first draw."""
    return _assign_groups(config, np.random.default_rng(seed))


def standin_pretrained(
    config: SyntheticConfig,
    seed: int,
    dim: int = EMBEDDING_DIM,
    exclude_groups: tuple[int, ...] = (),
    keyword_noise: float = 0.5,
    filler_scale: float = 0.3,
) -> EmbeddingTable:
    """A small seeded table playing the role of a biomedical pretrained model.

    Keywords of one group sit around a shared random direction, as related
    clinical terms would; filler words are isotropic noise. Keywords of
    ``exclude_groups`` are left out of the table.
    """
    rng = np.random.default_rng(seed)
    tokens: list[str] = []
    rows = []
    for tok in list(config.filler) + list(_SENTENCE_WORDS):
        tokens.append(tok)
        rows.append(filler_scale * rng.normal(0.0, 1.0, dim) / np.sqrt(dim))
    for g in range(1, N_GROUPS + 1):
        centroid = rng.normal(0.0, 1.0, dim) / np.sqrt(dim)
        for kw in config.keywords.get(g, []):
            vec = centroid + keyword_noise * rng.normal(0.0, 1.0, dim) / np.sqrt(dim)
            if g in exclude_groups:
                continue
            tokens.append(kw)
            rows.append(vec)
    return EmbeddingTable(tuple(tokens), np.array(rows), source="pretrained")


def mixed_signal_config(rare_pool: int = 1000, **overrides) -> tuple[SyntheticConfig, tuple[int, ...]]:
    """Cohort whose discriminative keywords are split between the two channels.

    Groups 1-10 use a few frequent keywords that the returned exclusion list
    keeps out of the stand-in pretrained table. Groups 11-20 cycle through
    ``rare_pool`` keywords each, so every one of them occurs too rarely to
    reach a skipgram vocabulary with the default ``min_count`` of 5, while
    the pretrained table still covers them.
    """
    keywords = default_keywords()
    for g in range(11, N_GROUPS + 1):
        keywords[g] = [f"rk{g:02d}x{j:04d}" for j in range(rare_pool)]
    config = SyntheticConfig(keywords=keywords, **overrides)
    return config, tuple(range(1, 11))


def two_cluster_config(groups: tuple[int, int] = (8, 9), **overrides) -> SyntheticConfig:
    """Exclusive two-group cohort with keyword-dense notes.

    Every admission belongs to exactly one of ``groups``. Notes carry 8-12
    keywords of their group, so same-group keywords dominate each other's
    context windows while the filler is shared across both clusters.
    """
    prev = [0.0] * N_GROUPS
    for g in groups:
        prev[g - 1] = 0.5
    kw = default_keywords()
    params = dict(prevalence=tuple(prev), exclusive=True, keywords_per_group=(8, 12),
                  keywords={g: kw[g] for g in groups})
    params.update(overrides)
    return SyntheticConfig(**params)
