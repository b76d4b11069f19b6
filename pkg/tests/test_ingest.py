import gzip
import logging

import numpy as np
import pytest

from conftest import DIAG_HEADER, LONG, NOTE_HEADER, write_csv
from icdgroup import ingest
from icdgroup.errors import DataError, EmptyResultError, SchemaError


def test_category_filter_three_rows(tmp_path):
    p = write_csv(
        tmp_path / "n.csv",
        NOTE_HEADER,
        [
            (1, 1, 10, "Physician ", "d", "", "a"),
            (2, 1, 10, "Nursing", "d", "", "b"),
            (3, 2, 11, "Physician ", "d", "", "c"),
        ],
    )
    notes = ingest.load_notes(p)
    assert [n.row_id for n in notes] == [1, 3]
    assert len(ingest.load_notes(p, None)) == 3


def test_header_only_and_missing_column(tmp_path):
    assert ingest.load_notes(write_csv(tmp_path / "h.csv", NOTE_HEADER, [])) == []
    header = [h for h in NOTE_HEADER if h != "TEXT"]
    with pytest.raises(SchemaError, match="TEXT"):
        ingest.load_notes(write_csv(tmp_path / "m.csv", header, []))


def test_missing_file_and_bad_iserror(tmp_path):
    with pytest.raises(DataError):
        ingest.load_notes(tmp_path / "nope.csv")
    p = write_csv(tmp_path / "n.csv", NOTE_HEADER, [(1, 1, 10, "Physician", "d", "maybe", LONG)])
    with pytest.raises(DataError, match="ISERROR"):
        ingest.load_notes(p)


def test_multiline_quoted_text_and_gzip(filter_fixture, tmp_path):
    notes_path, _ = filter_fixture
    notes = ingest.load_notes(notes_path)
    seven = next(n for n in notes if n.row_id == 7)
    assert seven.text.startswith('line one\nline two, "quoted"')
    gz = tmp_path / "n.csv.gz"
    gz.write_bytes(gzip.compress(notes_path.read_bytes()))
    assert ingest.load_notes(gz) == notes


def test_diagnoses(tmp_path, caplog):
    p = write_csv(tmp_path / "d.csv", DIAG_HEADER, [(1, 2, 100, 1, "4280")])
    recs = ingest.load_diagnoses(p)
    assert recs[0] == ingest.DiagnosisRecord(2, 100, "4280")
    rows = [(i, 1, 10, i, c) for i, c in enumerate(["4280", "486", "", "V3000", "E8782"], start=1)]
    with caplog.at_level(logging.WARNING):
        recs = ingest.load_diagnoses(write_csv(tmp_path / "d5.csv", DIAG_HEADER, rows))
    assert len(recs) == 4 and recs.blank_skipped == 1
    assert "blank" in caplog.text
    five = [(i, 1, 10, i, c) for i, c in enumerate(["4280", "486", "0389", "V3000", "E8782"], start=1)]
    assert len(ingest.load_diagnoses(write_csv(tmp_path / "d6.csv", DIAG_HEADER, five))) == 5


def test_filter_counts_exact(filter_fixture):
    n, d = filter_fixture
    corpus = ingest.build_cohort(ingest.load_notes(n), ingest.load_diagnoses(d))
    counts = corpus.provenance["filter_counts"]
    assert counts == {"input_notes": 10, "kept": 5, "error_removed": 2, "short_removed": 2, "no_diagnosis_removed": 1}
    assert [e.note.row_id for e in corpus] == [1, 4, 7, 8, 10]


def test_label_union_and_exclusions(filter_fixture):
    n, d = filter_fixture
    corpus = ingest.build_cohort(ingest.load_notes(n), ingest.load_diagnoses(d))
    by_row = {e.note.row_id: e for e in corpus}
    assert np.flatnonzero(by_row[1].labels).tolist() == [7, 8]  # {4280, 486} -> groups 8, 9
    assert np.flatnonzero(by_row[4].labels).tolist() == [18]
    assert np.flatnonzero(by_row[7].labels).tolist() == [0, 19]
    assert by_row[1].codes == {"4280", "486"}
    assert 2 not in by_row and 3 not in by_row and 6 not in by_row


def _note(row, words, is_error=False, hadm=100):
    return ingest.Note(row, 1, hadm, "Physician", is_error, " ".join(["tok"] * words))


def test_fourteen_words_and_error_excluded():
    diags = [ingest.DiagnosisRecord(1, 100, "4280")]
    notes = [_note(1, 14), _note(2, 15), _note(3, 40, is_error=True)]
    corpus = ingest.build_cohort(notes, diags)
    assert [e.note.row_id for e in corpus] == [2]


def test_empty_cohort_raises():
    with pytest.raises(EmptyResultError):
        ingest.build_cohort([_note(1, 3)], [ingest.DiagnosisRecord(1, 100, "4280")])


def test_invariants_on_synthetic(synth_dir):
    notes = ingest.load_notes(synth_dir["notes"])
    diags = ingest.load_diagnoses(synth_dir["diagnoses"])
    corpus = ingest.build_cohort(notes, diags)
    c = corpus.provenance["filter_counts"]
    assert c["input_notes"] == c["kept"] + c["error_removed"] + c["short_removed"] + c["no_diagnosis_removed"]
    assert len(corpus) <= synth_dir["config"].n_notes
    # idempotence
    again = ingest.build_cohort(corpus.notes, diags)
    assert [e.note.row_id for e in again] == [e.note.row_id for e in corpus]
    assert again.provenance["filter_counts"]["kept"] == len(corpus)
    # admission consistency
    first = {}
    for e in corpus:
        ref = first.setdefault(e.note.admission, e.labels)
        assert np.array_equal(ref, e.labels)


def test_stats_hand_count():
    text = " ".join(f"w{i}" for i in range(15))
    diags = [ingest.DiagnosisRecord(1, 100, "4280"), ingest.DiagnosisRecord(1, 100, "486")]
    notes = [
        ingest.Note(1, 1, 100, "Physician", False, text),
        ingest.Note(2, 1, 100, "Physician", False, text.upper()),
    ]
    corpus = ingest.build_cohort(notes, diags)
    s = ingest.corpus_stats(corpus)
    assert s.note_count == 2 and s.unique_word_count == 15  # case-folded
    assert s.unique_disease_count == 2 and s.group_count == 20
    single = ingest.build_cohort([ingest.Note(1, 1, 100, "Physician", False, text + " extra")], diags)
    s1 = ingest.corpus_stats(single)
    assert s1.min_note_words == s1.max_note_words == s1.mean_note_words == 16
