"""The benchmark grid: stage x balancing x classifier, scored on an untouched test split."""

from __future__ import annotations

import csv
import dataclasses
import enum
import hashlib
import io
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import httpx

from .. import classifiers, fewshot, llm_icl
from ..corpus import Dataset, Stage, class_distribution, random_oversample, stratified_split, with_stage
from ..features import build_vocabulary, tfidf_vector, to_dense
from ..preprocess import Lexicon, PipelineConfig, default_lexicon, run_pipeline
from .metrics import MetricsReport, compute_metrics, confusion_matrix, is_failure

log = logging.getLogger(__name__)

FSBM_NAME = "FSBM"
REPORT_COLUMNS = ("Classifier", "Accuracy", "Precision", "Recall", "F-measure")


class Balancing(enum.Enum):
    IMBALANCED = "imbalanced"
    BALANCED = "balanced"

    @classmethod
    def parse(cls, value) -> "Balancing":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown balancing {value!r}") from None


def derive_seed(*parts) -> int:
    """Stable 32-bit seed from any sequence of printable parts."""
    key = "|".join(p.name if isinstance(p, enum.Enum) else str(p) for p in parts)
    return int.from_bytes(hashlib.sha256(key.encode("utf-8")).digest()[:4], "little")


def default_classifier_specs() -> tuple[classifiers.ClassifierSpec, ...]:
    return tuple(classifiers.ClassifierSpec(alg) for alg in classifiers.DISPLAY_NAMES)


@dataclass(frozen=True)
class LlmSettings:
    config: llm_icl.ChatClientConfig
    styles: tuple = (llm_icl.Style.SIMPLE, llm_icl.Style.COMPLICATED)
    few_shot: bool = True
    max_in_flight: int = 1
    rate_per_second: float | None = None
    transport_factory: Callable[[Stage], httpx.BaseTransport] | None = None

    def cell_name(self, style) -> str:
        suffix = "" if self.few_shot else " (zero-shot)"
        return f"LLM {llm_icl.Style.parse(style).value.capitalize()} Prompt{suffix}"


@dataclass(frozen=True)
class BenchmarkGrid:
    stages: tuple = (Stage.STAGE1, Stage.STAGE2)
    balancings: tuple = (Balancing.IMBALANCED, Balancing.BALANCED)
    classifiers: tuple = field(default_factory=default_classifier_specs)
    fsbm: fewshot.FsbmConfig | None = field(default_factory=fewshot.FsbmConfig)
    embedding: dict = field(default_factory=lambda: {"kind": "hashed", "dim": 256, "seed": 0})
    llm: LlmSettings | None = None
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    lexicon: Lexicon | None = None
    train_fraction: float = 0.8
    min_df: int = 1

    def __post_init__(self):
        object.__setattr__(self, "stages", tuple(Stage.parse(s) for s in self.stages))
        object.__setattr__(self, "balancings", tuple(Balancing.parse(b) for b in self.balancings))
        object.__setattr__(self, "classifiers", tuple(self.classifiers))

    def model_names(self) -> list[str]:
        names = [classifiers.DISPLAY_NAMES[s.algorithm] for s in self.classifiers]
        if self.llm is not None:
            names += [self.llm.cell_name(s) for s in self.llm.styles]
        if self.fsbm is not None:
            names.append(FSBM_NAME)
        return names

    @property
    def n_cells(self) -> int:
        return len(self.stages) * len(self.balancings) * len(self.model_names())

    def only(self, selectors: Sequence[str]) -> "BenchmarkGrid":
        """Keep models whose algorithm key or display name matches a selector (case-insensitive)."""
        wanted = {s.strip().lower() for s in selectors if s.strip()}

        def hit(*names):
            return any(n.lower() in wanted for n in names)

        specs = tuple(s for s in self.classifiers if hit(s.algorithm, classifiers.DISPLAY_NAMES[s.algorithm]))
        fsbm = self.fsbm if hit(FSBM_NAME) else None
        llm = self.llm
        if llm is not None:
            styles = tuple(s for s in llm.styles if hit("llm", llm.cell_name(s)))
            llm = dataclasses.replace(llm, styles=styles) if styles else None
        grid = dataclasses.replace(self, classifiers=specs, fsbm=fsbm, llm=llm)
        if not grid.model_names():
            raise ValueError(f"--only {','.join(selectors)} matches no model in the grid")
        return grid

    def to_dict(self) -> dict:
        return {
            "stages": [s.value for s in self.stages],
            "balancings": [b.value for b in self.balancings],
            "classifiers": [s.to_dict() for s in self.classifiers],
            "fsbm": dataclasses.asdict(self.fsbm) if self.fsbm else None,
            "embedding": dict(self.embedding) if self.fsbm else None,
            "llm": None if self.llm is None else {
                "endpoint": self.llm.config.endpoint,
                "model": self.llm.config.model_name,
                "temperature": self.llm.config.temperature,
                "styles": [llm_icl.Style.parse(s).value for s in self.llm.styles],
                "few_shot": self.llm.few_shot,
            },
            "pipeline": dataclasses.asdict(self.pipeline),
            "train_fraction": self.train_fraction,
            "min_df": self.min_df,
        }


@dataclass(frozen=True)
class BenchmarkCell:
    stage: Stage
    balancing: Balancing
    classifier_name: str
    metrics: MetricsReport | None
    seed: int
    runtime: float
    error: str | None = None
    confusion: list | None = None
    n_train: int = 0
    n_test: int = 0
    train_distribution: dict = field(default_factory=dict)
    test_distribution: dict = field(default_factory=dict)
    parse_failures: int = 0

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self, include_runtime: bool = True) -> dict:
        out = {
            "stage": self.stage.value,
            "balancing": self.balancing.value,
            "classifier": self.classifier_name,
            "seed": self.seed,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "error": self.error,
            "confusion": self.confusion,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "train_distribution": {str(k): v for k, v in self.train_distribution.items()},
            "test_distribution": {str(k): v for k, v in self.test_distribution.items()},
            "parse_failures": self.parse_failures,
        }
        if include_runtime:
            out["runtime_seconds"] = self.runtime
        return out


class _Tokens:
    """Per-run cache of preprocessed token lists keyed by text."""

    def __init__(self, config: PipelineConfig, lexicon: Lexicon):
        self.config = config
        self.lexicon = lexicon
        self._cache: dict[str, list[str]] = {}

    def __call__(self, texts: Sequence[str]) -> list[list[str]]:
        out = []
        for t in texts:
            toks = self._cache.get(t)
            if toks is None:
                toks = self._cache[t] = run_pipeline(t, self.config, self.lexicon)
            out.append(toks)
        return out


def _audit(train: Dataset, test: Dataset):
    base_ids = {i.split("#", 1)[0] for i in train.ids}
    leaked = base_ids.intersection(test.ids)
    if leaked:
        raise RuntimeError(f"test reports leaked into training data: {sorted(leaked)[:5]}")


def _score(name, stage, balancing, seed, start, y_true, y_pred, train, test) -> BenchmarkCell:
    cm = confusion_matrix(list(y_true), list(y_pred), stage.n_classes)
    return BenchmarkCell(
        stage, balancing, name, compute_metrics(cm), seed, time.perf_counter() - start,
        confusion=cm.tolist(), n_train=len(train), n_test=len(test),
        train_distribution=class_distribution(train), test_distribution=class_distribution(test),
        parse_failures=sum(1 for p in y_pred if is_failure(p)),
    )


def run_benchmark(corpus: Dataset, grid: BenchmarkGrid | None = None, base_seed: int = 0,
                  provider: fewshot.EmbeddingProvider | None = None, workers: int = 1) -> list[BenchmarkCell]:
    """Run every (stage, balancing, model) cell in grid order.

    The split depends only on ``(base_seed, stage)`` so both balancings share
    the same test set; oversampling touches the training half only. A cell
    that raises is kept with its error message instead of metrics.
    """
    grid = grid or BenchmarkGrid()
    if corpus.stage is not Stage.STAGE1:
        raise ValueError("the benchmark expects a four-class (stage 1) corpus")
    tokens = _Tokens(grid.pipeline, grid.lexicon or default_lexicon())
    if grid.fsbm is not None and provider is None:
        provider = fewshot.provider_from_config(grid.embedding)
    cells: list[BenchmarkCell] = []
    for stage in grid.stages:
        data = with_stage(corpus, stage)
        train0, test = stratified_split(data, grid.train_fraction, derive_seed(base_seed, "split", stage))
        for balancing in grid.balancings:
            train = train0
            if balancing is Balancing.BALANCED:
                train = random_oversample(train0, derive_seed(base_seed, "oversample", stage))
            _audit(train, test)
            jobs = _cell_jobs(grid, stage, balancing, train, test, base_seed, tokens, provider)
            if workers > 1:
                with ThreadPoolExecutor(max_workers=workers) as pool:
                    cells.extend(pool.map(lambda job: job(), jobs))
            else:
                cells.extend(job() for job in jobs)
    return cells


def _cell_jobs(grid, stage, balancing, train, test, base_seed, tokens, provider):
    jobs = []
    vec_state: dict = {}

    def vectors():
        if not vec_state:
            train_docs = tokens(train.texts)
            vocab = build_vocabulary(train_docs, grid.min_df)
            vec_state["train"] = to_dense([tfidf_vector(d, vocab) for d in train_docs], len(vocab))
            vec_state["test"] = to_dense([tfidf_vector(d, vocab) for d in tokens(test.texts)], len(vocab))
        return vec_state["train"], vec_state["test"]

    def guarded(name, body):
        seed = derive_seed(base_seed, stage, balancing, name)

        def job():
            start = time.perf_counter()
            try:
                y_pred = body(seed)
            except Exception as exc:  # recorded on the cell, never dropped
                log.warning("cell %s/%s/%s failed: %s", stage.name, balancing.value, name, exc)
                return BenchmarkCell(stage, balancing, name, None, seed, time.perf_counter() - start,
                                     error=f"{type(exc).__name__}: {exc}", n_train=len(train), n_test=len(test))
            cell = _score(name, stage, balancing, seed, start, test.labels(), y_pred, train, test)
            log.info("cell %s/%s/%s accuracy %.3f", stage.name, balancing.value, name, cell.metrics.accuracy)
            return cell

        return job

    if grid.classifiers:
        def classical(spec):
            def body(seed):
                Xtr, Xte = vectors()
                model = classifiers.fit(dataclasses.replace(spec, seed=seed), Xtr, train.labels(), stage.n_classes)
                return classifiers.predict(model, Xte)
            return body

        for spec in grid.classifiers:
            jobs.append(guarded(classifiers.DISPLAY_NAMES[spec.algorithm], classical(spec)))
        try:
            vectors()
        except Exception:
            pass  # each classical cell re-raises and records the error

    if grid.llm is not None:
        settings = grid.llm

        def llm_body(style):
            def body(seed):
                shots = llm_icl.select_demonstrations(train, seed) if settings.few_shot else []
                template = llm_icl.make_template(style, stage, len(shots))
                transport = settings.transport_factory(stage) if settings.transport_factory else None
                return llm_icl.classify_many(settings.config, template, shots, test.texts,
                                             settings.max_in_flight, settings.rate_per_second, transport)
            return body

        for style in settings.styles:
            jobs.append(guarded(settings.cell_name(style), llm_body(style)))

    if grid.fsbm is not None:
        def fsbm_body(seed):
            model = fewshot.fsbm_fit(train, provider, grid.fsbm, seed)
            return fewshot.fsbm_predict_many(model, test.texts)

        jobs.append(guarded(FSBM_NAME, fsbm_body))
    return jobs


# --- reports ---------------------------------------------------------------

def _groups(cells: Sequence[BenchmarkCell]):
    order: dict[tuple, list[BenchmarkCell]] = {}
    for c in cells:
        order.setdefault((c.stage, c.balancing), []).append(c)
    return order


def _row(cell: BenchmarkCell) -> list[str]:
    if cell.metrics is None:
        return [cell.classifier_name] + ["failed"] * 4
    return [cell.classifier_name, *cell.metrics.rounded(3)]


def table_title(stage: Stage, balancing: Balancing) -> str:
    return f"Stage {stage.value} ({stage.n_classes}-class), {balancing.value} training data"


def emit_report(cells: Sequence[BenchmarkCell], format: str = "markdown") -> str:
    """One table per (stage, balancing) with metrics to three decimals, rows in grid order."""
    fmt = format.lower()
    if fmt in ("md", "markdown"):
        header = "| " + " | ".join(REPORT_COLUMNS) + " |\n|" + "---|" * len(REPORT_COLUMNS) + "\n"
        if not cells:
            return header
        parts = []
        for (stage, balancing), group in _groups(cells).items():
            body = "".join("| " + " | ".join(_row(c)) + " |\n" for c in group)
            parts.append(f"### {table_title(stage, balancing)}\n\n{header}{body}")
        return "\n".join(parts)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(("Stage", "Balancing") + REPORT_COLUMNS)
        for (stage, balancing), group in _groups(cells).items():
            for c in group:
                writer.writerow([stage.value, balancing.value] + _row(c))
        return buf.getvalue()
    raise ValueError(f"unknown report format {format!r}; expected markdown or csv")


def parse_csv_report(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    for r in rows:
        for key in REPORT_COLUMNS[1:]:
            r[key] = None if r[key] == "failed" else float(r[key])
        r["Stage"] = int(r["Stage"])
    return rows


def report_filename(stage: Stage, balancing: Balancing, ext: str) -> str:
    return f"results_stage{stage.value}_{balancing.value}.{ext}"


def benchmark_document(cells: Sequence[BenchmarkCell], grid: BenchmarkGrid, base_seed: int,
                       corpus: Dataset | None = None) -> dict:
    doc = {
        "format": "dentriage.benchmark",
        "version": 1,
        "base_seed": base_seed,
        "config": grid.to_dict(),
        "n_cells": len(cells),
        "cells": [c.to_dict(include_runtime=False) for c in cells],
    }
    if corpus is not None:
        doc["corpus"] = {"n_reports": len(corpus),
                         "distribution": {str(k): v for k, v in class_distribution(corpus).items()}}
    return doc


def write_reports(cells: Sequence[BenchmarkCell], out_dir: str | Path, grid: BenchmarkGrid,
                  base_seed: int, corpus: Dataset | None = None) -> list[Path]:
    """Write per-table Markdown/CSV files, ``benchmark.json``, and wall-clock times to ``timings.json``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for (stage, balancing), group in _groups(cells).items():
        for ext, fmt in (("md", "markdown"), ("csv", "csv")):
            path = out / report_filename(stage, balancing, ext)
            path.write_text(emit_report(group, fmt), encoding="utf-8")
            written.append(path)
    doc = benchmark_document(cells, grid, base_seed, corpus)
    path = out / "benchmark.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(path)
    timings = [{"stage": c.stage.value, "balancing": c.balancing.value, "classifier": c.classifier_name,
                "runtime_seconds": round(c.runtime, 4)} for c in cells]
    path = out / "timings.json"
    path.write_text(json.dumps(timings, indent=2) + "\n", encoding="utf-8")
    written.append(path)
    return written


def cells_from_document(doc: dict) -> list[BenchmarkCell]:
    """Rebuild cells from a ``benchmark.json`` document (runtimes are not stored there)."""
    if doc.get("format") != "dentriage.benchmark":
        raise ValueError("not a benchmark document")
    cells = []
    for c in doc["cells"]:
        m = c["metrics"]
        cells.append(BenchmarkCell(
            Stage.parse(c["stage"]), Balancing.parse(c["balancing"]), c["classifier"],
            MetricsReport(**m) if m else None, int(c["seed"]), 0.0, error=c.get("error"),
            confusion=c.get("confusion"), n_train=c.get("n_train", 0), n_test=c.get("n_test", 0),
            train_distribution={int(k): v for k, v in c.get("train_distribution", {}).items()},
            test_distribution={int(k): v for k, v in c.get("test_distribution", {}).items()},
            parse_failures=c.get("parse_failures", 0),
        ))
    return cells
