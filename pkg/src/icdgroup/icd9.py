"""ICD9 code parsing, the 20-group table, label binarization and prevalences."""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, EmptyResultError, MalformedCodeError

N_GROUPS = 20

_NUMERIC_RE = re.compile(r"^(\d{3})(\d{0,2})$")
_V_RE = re.compile(r"^V(\d{2})(\d{0,2})$")
_E_RE = re.compile(r"^E(\d{3})(\d?)$")


@dataclass(frozen=True)
class Icd9Code:
    raw: str
    kind: str  # "numeric", "V" or "E"
    numeric_prefix: int


def parse_code(code: str) -> Icd9Code:
    """Parse an undotted (MIMIC style) or dotted ICD9 diagnosis code."""
    if code is None:
        raise MalformedCodeError("empty ICD9 code")
    cleaned = code.strip().upper().replace(".", "")
    if not cleaned:
        raise MalformedCodeError("empty ICD9 code")
    m = _NUMERIC_RE.match(cleaned)
    if m:
        prefix = int(m.group(1))
        if not 1 <= prefix <= 999:
            raise MalformedCodeError(f"numeric ICD9 prefix out of range: {code!r}")
        return Icd9Code(code, "numeric", prefix)
    m = _V_RE.match(cleaned)
    if m:
        return Icd9Code(code, "V", int(m.group(1)))
    m = _E_RE.match(cleaned)
    if m:
        return Icd9Code(code, "E", int(m.group(1)))
    raise MalformedCodeError(f"malformed ICD9 code: {code!r}")


@dataclass(frozen=True)
class GroupRule:
    group_id: int
    label: str
    low: int | None = None
    high: int | None = None
    prefix: str | None = None

    def to_dict(self) -> dict:
        out: dict = {"id": self.group_id, "label": self.label}
        if self.prefix is not None:
            out["prefix"] = self.prefix
        else:
            out["range"] = [self.low, self.high]
        return out


class GroupingTable:
    """Ordered mapping of ICD9 codes onto disease groups 1..20.

    Numeric rules are inclusive 3-digit prefix ranges that must tile 001-999
    without overlap; exactly one rule takes every V code and one every E code.
    """

    def __init__(self, rules: Sequence[GroupRule]):
        self.rules = tuple(rules)
        ids = sorted(r.group_id for r in self.rules)
        if ids != list(range(1, N_GROUPS + 1)):
            raise DataError(f"group ids must be 1..{N_GROUPS} each used once, got {ids}")
        self._numeric = np.zeros(1000, dtype=np.int64)
        self._prefix: dict[str, int] = {}
        for r in self.rules:
            if r.prefix is not None:
                if r.prefix not in ("V", "E"):
                    raise DataError(f"unknown prefix rule {r.prefix!r}")
                if r.prefix in self._prefix:
                    raise DataError(f"more than one {r.prefix} rule")
                self._prefix[r.prefix] = r.group_id
                continue
            if r.low is None or r.high is None or not 1 <= r.low <= r.high <= 999:
                raise DataError(f"bad range for group {r.group_id}: {r.low}-{r.high}")
            span = self._numeric[r.low : r.high + 1]
            if span.any():
                raise DataError(f"range of group {r.group_id} overlaps another group")
            span[:] = r.group_id
        if not self._numeric[1:].all():
            missing = np.flatnonzero(self._numeric[1:] == 0) + 1
            raise DataError(f"numeric ranges leave prefixes uncovered, first: {missing[0]:03d}")
        if set(self._prefix) != {"V", "E"}:
            raise DataError("table needs exactly one V rule and one E rule")

    @classmethod
    def from_dict(cls, data: dict) -> "GroupingTable":
        rules = []
        for g in data["groups"]:
            if "prefix" in g:
                rules.append(GroupRule(int(g["id"]), str(g["label"]), prefix=str(g["prefix"])))
            else:
                low, high = g["range"]
                rules.append(GroupRule(int(g["id"]), str(g["label"]), int(low), int(high)))
        return cls(rules)

    @classmethod
    def load(cls, path: str | Path) -> "GroupingTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def default(cls) -> "GroupingTable":
        text = resources.files("icdgroup.data").joinpath("icd9_groups.json").read_text("utf-8")
        return cls.from_dict(json.loads(text))

    def to_dict(self) -> dict:
        return {"version": 1, "groups": [r.to_dict() for r in self.rules]}

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")

    def labels(self) -> list[str]:
        by_id = {r.group_id: r.label for r in self.rules}
        return [by_id[g] for g in range(1, N_GROUPS + 1)]

    def group_of(self, code: Icd9Code) -> int:
        if code.kind == "numeric":
            return int(self._numeric[code.numeric_prefix])
        return self._prefix[code.kind]


def parse_and_group(code: str, table: GroupingTable | None = None) -> int:
    """Return the 1-based disease group of a raw ICD9 code."""
    table = table or GroupingTable.default()
    return table.group_of(parse_code(code))


def binarize(groups: Iterable[int]) -> np.ndarray:
    vec = np.zeros(N_GROUPS, dtype=np.int8)
    for g in groups:
        if not 1 <= g <= N_GROUPS:
            raise ValueError(f"group id out of range: {g}")
        vec[g - 1] = 1
    return vec


def positions(label_vector: Sequence[int]) -> set[int]:
    """Inverse of :func:`binarize`: the set of 1-based groups switched on."""
    return {i + 1 for i, v in enumerate(label_vector) if v}


@dataclass(frozen=True)
class GroupPrevalence:
    group_id: int
    label: str
    positives: int
    prevalence: float


def label_distribution(corpus, table: GroupingTable | None = None) -> list[GroupPrevalence]:
    """Fraction of corpus entries labelled positive, one row per group."""
    if len(corpus) == 0:
        raise EmptyResultError("label distribution of an empty corpus")
    table = table or GroupingTable.default()
    labels = corpus.label_matrix()
    counts = labels.sum(axis=0)
    n = labels.shape[0]
    return [
        GroupPrevalence(g + 1, name, int(counts[g]), float(counts[g]) / n)
        for g, name in enumerate(table.labels())
    ]


def write_distribution_csv(rows: Sequence[GroupPrevalence], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["group_id", "label", "positives", "prevalence"])
        for r in rows:
            writer.writerow([r.group_id, r.label, r.positives, f"{r.prevalence:.6f}"])
