"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from . import embed, evaluation, icd9, ingest, pipeline, synthetic, text
from .errors import IcdGroupError

log = logging.getLogger("icdgroup")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_cohort_args(p):
    p.add_argument("--notes", required=True, help="NOTEEVENTS-style CSV (optionally .gz)")
    p.add_argument("--diagnoses", required=True, help="DIAGNOSES_ICD-style CSV (optionally .gz)")
    p.add_argument("--category", action="append", help="note CATEGORY to keep (repeatable, default Physician)")
    p.add_argument("--min-words", type=int, default=ingest.MIN_WORDS)
    p.add_argument("--grouping", help="ICD9 grouping table JSON overriding the bundled one")


def _cohort(args):
    grouping = icd9.GroupingTable.load(args.grouping) if args.grouping else icd9.GroupingTable.default()
    notes = ingest.load_notes(args.notes, args.category or ingest.DEFAULT_CATEGORIES)
    diags = ingest.load_diagnoses(args.diagnoses)
    return ingest.build_cohort(notes, diags, grouping, args.min_words), grouping


def _run_config(args) -> pipeline.RunConfig:
    data: dict = {}
    if args.config:
        data = json.loads(Path(args.config).read_text("utf-8"))
    overrides = {
        "notes_path": args.notes,
        "diagnoses_path": args.diagnoses,
        "pretrained_path": args.pretrained,
        "output_dir": args.out,
        "mode": args.mode,
        "seed": args.seed,
    }
    data.update({k: v for k, v in overrides.items() if v is not None})
    train = dict(data.get("train", {}))
    for key in ("epochs", "batch_size", "learning_rate"):
        v = getattr(args, key)
        if v is not None:
            train[key] = v
    if train:
        data["train"] = train
    missing = [k for k in ("notes_path", "diagnoses_path", "output_dir") if k not in data]
    if missing:
        raise SystemExit(_usage(f"missing {', '.join(missing)} (give --config or flags)"))
    try:
        return pipeline.RunConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise SystemExit(_usage(f"bad configuration: {exc}")) from None


def _usage(msg: str) -> int:
    print(f"icdgroup: error: {msg}", file=sys.stderr)
    return EXIT_USAGE


def cmd_synth(args) -> int:
    if args.mixed:
        config, exclude = synthetic.mixed_signal_config(n_notes=args.n_notes, n_admissions=args.n_admissions)
    else:
        config, exclude = synthetic.SyntheticConfig(n_notes=args.n_notes, n_admissions=args.n_admissions), ()
    notes, diags = synthetic.generate_synthetic(config, args.seed, args.out)
    pre = Path(args.out) / "pretrained_standin.txt"
    synthetic.standin_pretrained(config, args.seed, exclude_groups=exclude).save(pre)
    print(f"wrote {notes}\nwrote {diags}\nwrote {pre}")
    return EXIT_OK


def cmd_ingest(args) -> int:
    corpus, _ = _cohort(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["ROW_ID", "SUBJECT_ID", "HADM_ID", "LABELS", "TEXT"])
        for e in corpus:
            w.writerow([e.note.row_id, e.note.subject_id, e.note.hadm_id, "".join(map(str, e.labels)), e.note.text])
    counts = corpus.provenance["filter_counts"]
    print(json.dumps(counts, indent=2))
    if args.log:
        Path(args.log).write_text(json.dumps(counts, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_stats(args) -> int:
    corpus, grouping = _cohort(args)
    stats = ingest.corpus_stats(corpus)
    print(json.dumps(stats.as_dict(), indent=2))
    rows = icd9.label_distribution(corpus, grouping)
    if args.distribution:
        icd9.write_distribution_csv(rows, args.distribution)
    for r in rows:
        print(f"{r.group_id:>3}  {r.prevalence:7.4f}  {r.label}")
    return EXIT_OK


def cmd_train_embeddings(args) -> int:
    corpus, _ = _cohort(args)
    tokens = text.preprocess_corpus(corpus.texts(), text.load_stopwords(args.stopwords))
    cfg = embed.SkipgramConfig(
        dimension=args.dim, window=args.window, negatives=args.negatives, epochs=args.sg_epochs,
        min_count=args.min_count, seed=args.seed,
    )
    table = embed.train_skipgram(tokens, cfg)
    table.save(args.out)
    print(f"{len(table)} vectors of dimension {table.dimension} -> {args.out}")
    print("epoch loss: " + ", ".join(f"{x:.4f}" for x in table.meta["epoch_loss"]))
    return EXIT_OK


def cmd_train(args) -> int:
    config = _run_config(args)
    result = pipeline.run_pipeline(config)
    print(result["report"].to_table(config.mode))
    print(f"artifacts in {result['output_dir']}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    corpus, _ = _cohort(args)
    scores = pipeline.predict_texts(args.run, corpus.texts())
    report = evaluation.evaluate(scores, corpus.label_matrix(), args.threshold)
    if args.out:
        Path(args.out).write_text(report.to_json(), encoding="utf-8")
    print(report.to_table())
    return EXIT_OK


def cmd_predict(args) -> int:
    notes = ingest.load_notes(args.notes, args.category or ingest.DEFAULT_CATEGORIES)
    scores = pipeline.predict_texts(args.run, [n.text for n in notes])
    out = open(args.out, "w", newline="", encoding="utf-8") if args.out else sys.stdout
    try:
        w = csv.writer(out)
        w.writerow(["ROW_ID", *[f"group_{g}" for g in range(1, icd9.N_GROUPS + 1)]])
        for n, row in zip(notes, scores):
            w.writerow([n.row_id, *[f"{v:.6f}" for v in row]])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def cmd_compare(args) -> int:
    table = pipeline.compare_baselines(args.runs, with_reference=args.reference)
    rendered = pipeline.format_comparison(table)
    print(rendered, end="")
    if args.out:
        Path(args.out).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="icdgroup", description="ICD9 disease-group prediction from physician notes")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="generate a synthetic MIMIC-style corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=7)
    p.add_argument("--n-notes", type=int, default=2000)
    p.add_argument("--n-admissions", type=int, default=500)
    p.add_argument("--mixed", action="store_true", help="split keyword signal between the two channels")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("ingest", help="build the labelled cohort CSV")
    _add_cohort_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--log", help="write filter counts as JSON")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("stats", help="corpus statistics and label distribution")
    _add_cohort_args(p)
    p.add_argument("--distribution", help="write the 20-row prevalence CSV here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train-embeddings", help="train skipgram vectors on the cohort notes")
    _add_cohort_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--stopwords")
    p.add_argument("--dim", type=int, default=embed.EMBEDDING_DIM)
    p.add_argument("--window", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--sg-epochs", type=int, default=5)
    p.add_argument("--min-count", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_train_embeddings)

    for name in ("train", "run"):
        p = sub.add_parser(name, help="run the full pipeline and write a report")
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--notes")
        p.add_argument("--diagnoses")
        p.add_argument("--pretrained")
        p.add_argument("--out")
        p.add_argument("--mode", choices=pipeline.MODES)
        p.add_argument("--seed", type=int)
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", dest="batch_size", type=int)
        p.add_argument("--learning-rate", dest="learning_rate", type=float)
        p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a finished run on another cohort")
    _add_cohort_args(p)
    p.add_argument("--run", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="per-note group scores from a finished run")
    p.add_argument("--run", required=True)
    p.add_argument("--notes", required=True)
    p.add_argument("--category", action="append")
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("compare", help="side-by-side metrics of several runs")
    p.add_argument("runs", nargs="+")
    p.add_argument("--reference", action="store_true", help="append published reference values")
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except IcdGroupError as exc:
        print(f"icdgroup: {exc}", file=sys.stderr)
        return getattr(exc, "exit_code", EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
