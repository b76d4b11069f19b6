"""End-to-end runs: cohort -> features -> classifier -> held-out report."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import baseline, embed, evaluation, icd9, ingest, net, text
from .errors import DataError, IcdGroupError, PipelineError

log = logging.getLogger(__name__)

MODES = ("hybrid", "word2vec_only", "pretrained_only", "tfidf")
OUTPUT_DIR_ENV = "ICDGROUP_OUTPUT_DIR"
REPORT_VERSION = 1

# Published MIMIC-III results, kept only as reference columns for comparison tables.
REFERENCE_RESULTS = {
    "hybrid": {"auroc": 0.89, "auprc": 0.85, "accuracy": 0.79, "precision": 0.82, "recall": 0.79, "f_score": 0.79, "mcc": 0.58},
    "tfidf": {"auroc": 0.87, "auprc": 0.81, "accuracy": 0.78, "precision": 0.80, "recall": 0.78, "f_score": 0.78, "mcc": 0.53},
    "word2vec_only": {"auroc": 0.88, "auprc": 0.84, "accuracy": 0.79, "precision": 0.82, "recall": 0.79, "f_score": 0.79, "mcc": 0.57},
    "pretrained_only": {"auroc": 0.88, "auprc": 0.82, "accuracy": 0.79, "precision": 0.80, "recall": 0.78, "f_score": 0.79, "mcc": 0.56},
    "structured_ehr": {"auroc": 0.77, "auprc": 0.60},
}


def derive_seed(seed: int, label: str) -> int:
    """Independent per-stage seed from the run seed and a fixed stage label."""
    ss = np.random.SeedSequence([seed, zlib.crc32(label.encode())])
    return int(ss.generate_state(1)[0])


@dataclass
class RunConfig:
    notes_path: str
    diagnoses_path: str
    output_dir: str
    pretrained_path: str | None = None
    mode: str = "hybrid"
    seed: int = 0
    categories: list[str] = field(default_factory=lambda: sorted(ingest.DEFAULT_CATEGORIES))
    min_words: int = ingest.MIN_WORDS
    grouping_path: str | None = None
    stopwords_path: str | None = None
    embedding_dim: int = embed.EMBEDDING_DIM
    tfidf_top_k: int = 1000
    threshold: float = 0.5
    skipgram: embed.SkipgramConfig = field(default_factory=embed.SkipgramConfig)
    train: net.TrainConfig = field(default_factory=net.TrainConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise DataError(f"unknown mode {self.mode!r}; choose from {', '.join(MODES)}")
        if isinstance(self.skipgram, dict):
            self.skipgram = embed.SkipgramConfig(**self.skipgram)
        if isinstance(self.train, dict):
            self.train = net.TrainConfig(**self.train)
        # every random stream is a function of the run seed
        self.skipgram = dataclasses.replace(self.skipgram, seed=derive_seed(self.seed, "skipgram"))
        self.train = dataclasses.replace(self.train, seed=derive_seed(self.seed, "train"))

    @property
    def split_seed(self) -> int:
        return derive_seed(self.seed, "split")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise DataError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def file_hash(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cohort_hash(corpus: ingest.LabeledCorpus) -> str:
    h = hashlib.sha256()
    for e in corpus:
        h.update(f"{e.note.row_id}:{e.note.hadm_id}:".encode())
        h.update(e.labels.tobytes())
    return h.hexdigest()


def _ids_hash(ids: Iterable[int]) -> str:
    return hashlib.sha256(",".join(map(str, sorted(ids))).encode()).hexdigest()


class _Stage:
    """Context manager tagging any error raised inside with the stage name."""

    def __init__(self, name: str, run_log: dict):
        self.name = name
        self.run_log = run_log

    def __enter__(self):
        log.info("stage %s", self.name)
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is None:
            self.run_log["stages"].append(self.name)
            return False
        if isinstance(exc, PipelineError):
            return False
        if isinstance(exc, (IcdGroupError, ValueError, OSError)):
            raise PipelineError(self.name, exc) from exc
        return False


def _write_text(path: Path, content: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(content)


def _channel_features(mode: str, tokens, tables: dict) -> list[np.ndarray]:
    if mode == "hybrid":
        return [embed.vectorize_corpus(tokens, tables["trained"]), embed.vectorize_corpus(tokens, tables["pretrained"])]
    if mode == "word2vec_only":
        return [embed.vectorize_corpus(tokens, tables["trained"])]
    if mode == "pretrained_only":
        return [embed.vectorize_corpus(tokens, tables["pretrained"])]
    return [baseline.tfidf_matrix(tokens, tables["tfidf"])]


def resolve_output_dir(config: RunConfig) -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV) or config.output_dir)


def run_pipeline(config: RunConfig) -> dict:
    """Run one configuration end to end and write its artifacts.

    Returns a dict with the output directory, report and run log. Any stage
    failure is re-raised as :class:`PipelineError` naming the stage.
    """
    out = resolve_output_dir(config)
    run_log: dict = {"stages": [], "mode": config.mode, "seed": config.seed}

    with _Stage("config", run_log):
        needed = {"notes_path": config.notes_path, "diagnoses_path": config.diagnoses_path}
        if config.mode in ("hybrid", "pretrained_only"):
            if not config.pretrained_path:
                raise DataError(f"mode {config.mode} needs pretrained_path")
            needed["pretrained_path"] = config.pretrained_path
        for key, p in needed.items():
            if not Path(p).exists():
                raise DataError(f"{key} does not exist: {p}")
        out.mkdir(parents=True, exist_ok=True)
        input_hashes = {k: file_hash(p) for k, p in sorted(needed.items())}

    with _Stage("ingest", run_log):
        grouping = icd9.GroupingTable.load(config.grouping_path) if config.grouping_path else icd9.GroupingTable.default()
        notes = ingest.load_notes(config.notes_path, config.categories)
        diagnoses = ingest.load_diagnoses(config.diagnoses_path)
        corpus = ingest.build_cohort(notes, diagnoses, grouping, config.min_words)
        run_log["loaded_notes"] = len(notes)
        run_log["diagnosis_rows"] = len(diagnoses)
        run_log["blank_codes_skipped"] = diagnoses.blank_skipped
        run_log["filter_counts"] = corpus.provenance["filter_counts"]

    with _Stage("text", run_log):
        stop = text.load_stopwords(config.stopwords_path)
        tokens = text.preprocess_corpus(corpus.texts(), stop)
        targets = corpus.label_matrix()
        train_idx, val_idx = net.split_by_admission(corpus.hadm_ids(), config.train.validation_fraction, config.split_seed)
        if val_idx.size == 0:
            raise DataError("validation split is empty; need more than one admission")
        hadm = corpus.hadm_ids()
        run_log["n_train"] = int(train_idx.size)
        run_log["n_validation"] = int(val_idx.size)
        train_tokens = [tokens[i] for i in train_idx]

    tables: dict = {}
    embedding_hashes: dict[str, str] = {}
    with _Stage("embed", run_log):
        if config.mode in ("hybrid", "word2vec_only"):
            tables["trained"] = embed.train_skipgram(train_tokens, config.skipgram)
            tables["trained"].save(out / "embeddings_trained.txt")
            embedding_hashes["trained"] = tables["trained"].content_hash()
            run_log["skipgram_vocabulary"] = len(tables["trained"])
            run_log["skipgram_epoch_loss"] = tables["trained"].meta["epoch_loss"]
        if config.mode in ("hybrid", "pretrained_only"):
            tables["pretrained"] = embed.load_pretrained(config.pretrained_path, config.embedding_dim)
            embedding_hashes["pretrained"] = tables["pretrained"].content_hash()
        if config.mode == "tfidf":
            tables["tfidf"] = baseline.fit_tfidf(train_tokens, config.tfidf_top_k)
            tables["tfidf"].save(out / "tfidf_model.tsv")
        features = _channel_features(config.mode, tokens, tables)
        for name in ("trained", "pretrained"):
            if name in tables:
                _, oov = embed.vectorize_corpus(tokens, tables[name], return_oov=True)
                run_log[f"mean_oov_{name}"] = float(oov.mean())
        run_log["input_width"] = int(features[0].shape[1])

    with _Stage("scale", run_log):
        scaler = net.fit_scaler([f[train_idx] for f in features])
        scaled = net.apply_scaler(scaler, features)

    with _Stage("train", run_log):
        train_set = net.Dataset([s[train_idx] for s in scaled], targets[train_idx])
        val_set = net.Dataset([s[val_idx] for s in scaled], targets[val_idx])
        params, history = net.train_model(train_set, config.train, val_set)
        run_log["history"] = dataclasses.asdict(history)
        if params.gates is not None:
            run_log["gate_means"] = [float(g.mean()) for g in params.gates]

    with _Stage("evaluate", run_log):
        scores = net.predict_scores(params, val_set.channels)
        report = evaluation.evaluate(scores, val_set.targets.astype(np.int8), config.threshold)
        meta = {
            "mode": config.mode,
            "embedding_hashes": embedding_hashes,
            "input_width": run_log["input_width"],
            "cohort_hash": cohort_hash(corpus),
            "split_hash": _ids_hash(set(hadm[val_idx].tolist())),
        }
        net.save_checkpoint(out / "checkpoint.npz", params, scaler, config.train, meta)
        payload = {
            "version": REPORT_VERSION,
            "mode": config.mode,
            "seed": config.seed,
            "split_seed": config.split_seed,
            "cohort_hash": meta["cohort_hash"],
            "split_hash": meta["split_hash"],
            "n_train": run_log["n_train"],
            "n_validation": run_log["n_validation"],
            **report.to_dict(),
        }
        _write_text(out / "report.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
        _write_text(out / "report.txt", f"mode: {config.mode}\n\n" + report.to_table(config.mode))
        _write_text(
            out / "config.json",
            json.dumps({"config": config.to_dict(), "input_hashes": input_hashes}, indent=2, sort_keys=True) + "\n",
        )
        icd9.write_distribution_csv(icd9.label_distribution(corpus, grouping), out / "label_distribution.csv")
        _write_text(out / "run_log.json", json.dumps(run_log, indent=2, sort_keys=True) + "\n")
    return {"output_dir": out, "report": report, "run_log": run_log, "params": params, "scaler": scaler}


def load_run_tables(run_dir: str | Path) -> tuple[RunConfig, dict]:
    """Config snapshot and feature tables saved by :func:`run_pipeline`."""
    run_dir = Path(run_dir)
    config = RunConfig.from_dict(json.loads((run_dir / "config.json").read_text("utf-8"))["config"])
    _, _, header = net.load_checkpoint(run_dir / "checkpoint.npz")
    hashes = header["meta"].get("embedding_hashes", {})
    tables: dict = {}
    if config.mode in ("hybrid", "word2vec_only"):
        tables["trained"] = embed.load_pretrained(run_dir / "embeddings_trained.txt", config.skipgram.dimension, "trained")
    if config.mode in ("hybrid", "pretrained_only"):
        tables["pretrained"] = embed.load_pretrained(config.pretrained_path, config.embedding_dim)
    if config.mode == "tfidf":
        tables["tfidf"] = baseline.TfidfModel.load(run_dir / "tfidf_model.tsv")
    for name, h in hashes.items():
        if tables[name].content_hash() != h:
            raise DataError(f"{name} embedding table differs from the one the model was trained with")
    return config, tables


def predict_texts(run_dir: str | Path, texts: Sequence[str]) -> np.ndarray:
    """Group scores for raw note texts using a finished run's model."""
    run_dir = Path(run_dir)
    config, tables = load_run_tables(run_dir)
    params, scaler, _ = net.load_checkpoint(run_dir / "checkpoint.npz")
    stop = text.load_stopwords(config.stopwords_path)
    tokens = text.preprocess_corpus(texts, stop)
    features = _channel_features(config.mode, tokens, tables)
    return net.predict_scores(params, net.apply_scaler(scaler, features))


def compare_baselines(run_dirs: Sequence[str | Path], with_reference: bool = False) -> dict:
    """Side-by-side metrics of finished runs that share one cohort and split."""
    if len(run_dirs) < 2:
        raise DataError("comparison needs at least two runs")
    reports = []
    for d in run_dirs:
        p = Path(d) / "report.json"
        if not p.exists():
            raise DataError(f"no report.json in {d}")
        reports.append(json.loads(p.read_text("utf-8")))
    for r in reports[1:]:
        if r["cohort_hash"] != reports[0]["cohort_hash"]:
            raise DataError("runs were built on different cohorts")
        if r["split_hash"] != reports[0]["split_hash"] or r["split_seed"] != reports[0]["split_seed"]:
            raise DataError("runs use different train/validation splits")
    columns = [r["mode"] for r in reports]
    rows = {k: [r["metrics"][k] for r in reports] for k in evaluation.METRIC_ORDER}
    table = {"columns": columns, "rows": rows}
    if with_reference:
        table["reference"] = {m: REFERENCE_RESULTS.get(m, {}) for m in columns}
    return table


def format_comparison(table: dict) -> str:
    cols = table["columns"]
    width = max(12, *(len(c) + 2 for c in cols))
    lines = [f"{'Parameter':<12}" + "".join(f"{c:>{width}}" for c in cols)]
    lines.append("-" * len(lines[0]))
    for k in evaluation.METRIC_ORDER:
        lines.append(f"{evaluation.METRIC_NAMES[k]:<12}" + "".join(f"{v:>{width}.4f}" for v in table["rows"][k]))
    if "reference" in table:
        lines.append("")
        lines.append("published MIMIC-III values:")
        for k in evaluation.METRIC_ORDER:
            vals = [table["reference"][c].get(k) for c in cols]
            lines.append(
                f"{evaluation.METRIC_NAMES[k]:<12}"
                + "".join(f"{v:>{width}.2f}" if v is not None else f"{'-':>{width}}" for v in vals)
            )
    return "\n".join(lines) + "\n"
