"""
Note and diagnosis loading plus cohort construction.

Input files follow the MIMIC-III export schema (``NOTEEVENTS`` and
``DIAGNOSES_ICD``): RFC-4180 CSV with quoted, possibly multi-line text
fields. Plain and gzip-compressed files are both accepted.

Cohort rules
------------
- only notes whose CATEGORY is in the requested set are loaded;
- notes flagged ISERROR=1 are removed;
- notes with fewer than ``min_words`` whitespace-separated words are removed;
- every remaining note inherits the union of the disease groups of all
  diagnoses recorded for its (SUBJECT_ID, HADM_ID) admission;
- notes whose admission has no diagnosis row are dropped.
"""

from __future__ import annotations

import csv
import gzip
import io
import logging
import sys
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError, EmptyResultError, SchemaError
from .icd9 import GroupingTable, MalformedCodeError, N_GROUPS, binarize, parse_code

log = logging.getLogger(__name__)

NOTE_COLUMNS = ("ROW_ID", "SUBJECT_ID", "HADM_ID", "CATEGORY", "ISERROR", "TEXT")
DIAGNOSIS_COLUMNS = ("SUBJECT_ID", "HADM_ID", "ICD9_CODE")
DEFAULT_CATEGORIES = frozenset({"Physician"})
MIN_WORDS = 15

# MIMIC note texts exceed the csv module's default 128 KiB field limit.
csv.field_size_limit(min(sys.maxsize, 2**31 - 1))


@dataclass(frozen=True)
class Note:
    row_id: int
    subject_id: int
    hadm_id: int
    category: str
    is_error: bool
    text: str
    description: str = ""

    @property
    def admission(self) -> tuple[int, int]:
        return (self.subject_id, self.hadm_id)


@dataclass(frozen=True)
class DiagnosisRecord:
    subject_id: int
    hadm_id: int
    icd9_code: str


@dataclass(frozen=True)
class CorpusEntry:
    note: Note
    labels: np.ndarray  # shape (20,), int8 in {0, 1}
    codes: frozenset[str] = frozenset()


@dataclass
class FilterCounts:
    input_notes: int = 0
    kept: int = 0
    error_removed: int = 0
    short_removed: int = 0
    no_diagnosis_removed: int = 0

    def as_dict(self) -> dict[str, int]:
        return dict(self.__dict__)


@dataclass
class LabeledCorpus:
    entries: list[CorpusEntry]
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[CorpusEntry]:
        return iter(self.entries)

    @property
    def notes(self) -> list[Note]:
        return [e.note for e in self.entries]

    def texts(self) -> list[str]:
        return [e.note.text for e in self.entries]

    def label_matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, N_GROUPS), dtype=np.int8)
        return np.stack([e.labels for e in self.entries]).astype(np.int8)

    def hadm_ids(self) -> np.ndarray:
        return np.array([e.note.hadm_id for e in self.entries], dtype=np.int64)


@dataclass(frozen=True)
class CorpusStats:
    note_count: int
    unique_word_count: int
    max_note_words: int
    min_note_words: int
    mean_note_words: float
    unique_disease_count: int
    group_count: int
    note_type_counts: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def _open_text(path: Path):
    if path.suffix == ".gz":
        return io.TextIOWrapper(gzip.open(path, "rb"), encoding="utf-8", newline="")
    return open(path, encoding="utf-8", newline="")


def _read_rows(path: str | Path, required: Sequence[str]) -> Iterator[tuple[int, dict]]:
    """Yield (line number, row dict) pairs after checking the header."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"file not found: {path}")
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, no header row") from None
        header = [h.strip().upper() for h in header]
        missing = [c for c in required if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing required column(s) {', '.join(missing)}")
        width = len(header)
        try:
            for row in reader:
                if not row:
                    continue
                if len(row) != width:
                    raise DataError(
                        f"{path}: row ending at line {reader.line_num} has {len(row)} fields, expected {width}"
                    )
                yield reader.line_num, dict(zip(header, row))
        except csv.Error as exc:
            raise DataError(f"{path}: unparseable CSV near line {reader.line_num}: {exc}") from exc


def _int_field(row: dict, name: str, path, line: int) -> int:
    value = row[name].strip()
    try:
        return int(float(value)) if "." in value else int(value)
    except ValueError:
        raise DataError(f"{path}: line {line}: {name}={value!r} is not an integer") from None


def _parse_iserror(value: str, path, line: int) -> bool:
    v = value.strip()
    if v in ("", "0", "0.0"):
        return False
    if v in ("1", "1.0"):
        return True
    raise DataError(f"{path}: line {line}: ISERROR={value!r} is not empty, 0 or 1")


def load_notes(path: str | Path, category_filter: Iterable[str] | None = DEFAULT_CATEGORIES) -> list[Note]:
    """Read notes whose CATEGORY is in ``category_filter``, sorted by ROW_ID.

    Category comparison ignores surrounding whitespace (MIMIC stores
    ``"Physician "`` with a trailing blank). ``None`` keeps every category.
    Rows without a HADM_ID cannot be labelled and are skipped with a warning.
    """
    wanted = None if category_filter is None else {c.strip() for c in category_filter}
    notes = []
    no_hadm = 0
    for line, row in _read_rows(path, NOTE_COLUMNS):
        category = row["CATEGORY"].strip()
        if wanted is not None and category not in wanted:
            continue
        if not row["HADM_ID"].strip():
            no_hadm += 1
            continue
        hadm = _int_field(row, "HADM_ID", path, line)
        if hadm <= 0:
            raise DataError(f"{path}: line {line}: HADM_ID must be positive, got {hadm}")
        notes.append(
            Note(
                row_id=_int_field(row, "ROW_ID", path, line),
                subject_id=_int_field(row, "SUBJECT_ID", path, line),
                hadm_id=hadm,
                category=category,
                is_error=_parse_iserror(row["ISERROR"], path, line),
                text=row["TEXT"],
                description=row.get("DESCRIPTION", "").strip(),
            )
        )
    if no_hadm:
        log.warning("%s: skipped %d note(s) without HADM_ID", path, no_hadm)
    notes.sort(key=lambda n: n.row_id)
    return notes


@dataclass
class DiagnosisLoad:
    records: list[DiagnosisRecord]
    blank_skipped: int = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]


def load_diagnoses(path: str | Path) -> DiagnosisLoad:
    """Read diagnosis rows; rows with a blank ICD9_CODE are skipped and counted."""
    records = []
    blank = 0
    for line, row in _read_rows(path, DIAGNOSIS_COLUMNS):
        code = row["ICD9_CODE"].strip()
        if not code:
            blank += 1
            continue
        records.append(
            DiagnosisRecord(
                subject_id=_int_field(row, "SUBJECT_ID", path, line),
                hadm_id=_int_field(row, "HADM_ID", path, line),
                icd9_code=code,
            )
        )
    if blank:
        log.warning("%s: skipped %d diagnosis row(s) with blank ICD9_CODE", path, blank)
    return DiagnosisLoad(records, blank)


def word_count(text: str) -> int:
    return len(text.split())


def build_cohort(
    notes: Sequence[Note],
    diagnoses: Iterable[DiagnosisRecord],
    grouping: GroupingTable | None = None,
    min_words: int = MIN_WORDS,
) -> LabeledCorpus:
    """Filter notes and attach admission-level 20-group label vectors."""
    grouping = grouping or GroupingTable.default()
    groups_by_adm: dict[tuple[int, int], set[int]] = defaultdict(set)
    codes_by_adm: dict[tuple[int, int], set[str]] = defaultdict(set)
    for d in diagnoses:
        try:
            g = grouping.group_of(parse_code(d.icd9_code))
        except MalformedCodeError as exc:
            raise DataError(f"admission ({d.subject_id}, {d.hadm_id}): {exc}") from exc
        groups_by_adm[(d.subject_id, d.hadm_id)].add(g)
        codes_by_adm[(d.subject_id, d.hadm_id)].add(d.icd9_code)

    counts = FilterCounts(input_notes=len(notes))
    entries = []
    for note in sorted(notes, key=lambda n: n.row_id):
        if note.is_error:
            counts.error_removed += 1
        elif word_count(note.text) < min_words:
            counts.short_removed += 1
        elif note.admission not in groups_by_adm:
            counts.no_diagnosis_removed += 1
        else:
            entries.append(
                CorpusEntry(note, binarize(groups_by_adm[note.admission]), frozenset(codes_by_adm[note.admission]))
            )
    counts.kept = len(entries)
    if not entries:
        raise EmptyResultError(f"cohort is empty after filtering: {counts.as_dict()}")
    log.info("cohort: %s", counts.as_dict())
    return LabeledCorpus(entries, {"min_words": min_words, "filter_counts": counts.as_dict()})


def corpus_stats(corpus: LabeledCorpus) -> CorpusStats:
    """Corpus characteristics computed on raw whitespace tokens."""
    if len(corpus) == 0:
        raise EmptyResultError("statistics of an empty corpus")
    vocab: set[str] = set()
    lengths = []
    codes: set[str] = set()
    kinds: Counter = Counter()
    for e in corpus:
        words = e.note.text.split()
        lengths.append(len(words))
        vocab.update(w.casefold() for w in words)
        codes.update(e.codes)
        kinds[e.note.description] += 1
    return CorpusStats(
        note_count=len(corpus),
        unique_word_count=len(vocab),
        max_note_words=max(lengths),
        min_note_words=min(lengths),
        mean_note_words=sum(lengths) / len(lengths),
        unique_disease_count=len(codes),
        group_count=N_GROUPS,
        note_type_counts=dict(sorted(kinds.items(), key=lambda kv: (-kv[1], kv[0]))),
    )
