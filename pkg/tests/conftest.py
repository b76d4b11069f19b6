import csv
from pathlib import Path

import numpy as np
import pytest

LONG = " ".join(f"word{i}" for i in range(20))  # 20 whitespace words


def write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


NOTE_HEADER = ["ROW_ID", "SUBJECT_ID", "HADM_ID", "CATEGORY", "DESCRIPTION", "ISERROR", "TEXT"]
DIAG_HEADER = ["ROW_ID", "SUBJECT_ID", "HADM_ID", "SEQ_NUM", "ICD9_CODE"]


@pytest.fixture
def filter_fixture(tmp_path):
    """Ten physician notes with a known fate under the cohort filters.

    kept 5, error 2, short 2, no diagnosis 1. One nursing note is never loaded.
    """
    fourteen = " ".join(["w"] * 14)
    fifteen = " ".join(["w"] * 15)
    notes = [
        (1, 10, 100, "Physician ", "Intensivist", "", LONG),
        (2, 10, 100, "Physician ", "Intensivist", "1", LONG),  # error
        (3, 10, 100, "Physician ", "Intensivist", "", fourteen),  # short
        (4, 11, 101, "Physician ", "Intensivist", "0", fifteen),  # exactly 15: kept
        (5, 11, 101, "Physician ", "Intensivist", "1", fourteen),  # error wins over short
        (6, 12, 102, "Physician ", "Intensivist", "", LONG),  # no diagnosis rows
        (7, 13, 103, "Physician ", "Intensivist", "", "line one\nline two, \"quoted\" " + LONG),
        (8, 13, 103, "Physician ", "Intensivist", "", LONG),
        (9, 14, 104, "Physician ", "Intensivist", "", "too   short"),  # short
        (10, 14, 104, "Physician ", "Intensivist", "", LONG),
        (11, 14, 104, "Nursing", "Nursing", "", LONG),
    ]
    diags = [
        (1, 10, 100, 1, "4280"),
        (2, 10, 100, 2, "486"),
        (3, 11, 101, 1, "V3000"),
        (4, 13, 103, 1, "E8782"),
        (5, 13, 103, 2, "0389"),
        (6, 14, 104, 1, "25000"),
        (7, 14, 104, 2, ""),
    ]
    n = write_csv(tmp_path / "NOTEEVENTS.csv", NOTE_HEADER, notes)
    d = write_csv(tmp_path / "DIAGNOSES_ICD.csv", DIAG_HEADER, diags)
    return n, d


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Default synthetic cohort (seed 7) plus its stand-in pretrained table."""
    from icdgroup import synthetic

    out = tmp_path_factory.mktemp("synth")
    cfg = synthetic.SyntheticConfig()
    notes, diags = synthetic.generate_synthetic(cfg, 7, out)
    pre = out / "pretrained.txt"
    synthetic.standin_pretrained(cfg, 7).save(pre)
    return {"notes": notes, "diagnoses": diags, "pretrained": pre, "config": cfg, "dir": out}


@pytest.fixture(scope="session")
def small_synth_dir(tmp_path_factory):
    """A 300-note cohort for fast end-to-end pipeline tests."""
    from icdgroup import synthetic

    out = tmp_path_factory.mktemp("small")
    cfg = synthetic.SyntheticConfig(n_notes=300, n_admissions=80)
    notes, diags = synthetic.generate_synthetic(cfg, 3, out)
    pre = out / "pretrained.txt"
    synthetic.standin_pretrained(cfg, 3).save(pre)
    return {"notes": notes, "diagnoses": diags, "pretrained": pre, "config": cfg, "dir": out}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.__dict__.setdefault("_acceptance_lines", [])

    def record(number: int, title: str, ok: bool, detail: str = ""):
        lines.append((number, title, ok, detail))
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.__dict__.get("_acceptance_lines")
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, ok, detail in sorted(lines):
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title}: {detail}")
