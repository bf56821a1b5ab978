"""Labeled radiology reports, label stages, splitting and oversampling."""

from __future__ import annotations

import csv
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

SEVERITY_DESCRIPTIONS = {
    1: "Issues require urgent attention",
    2: "Treatment can be delayed",
    3: "The problem is not urgent (optional treatment)",
    4: "Conditions are entirely normal (no treatment required)",
}

STAGE2_DESCRIPTIONS = {
    0: "urgent: compulsory treatment (severity 1-2)",
    1: "non-urgent: no compulsory treatment (severity 3-4)",
}


class CorpusError(ValueError):
    """Raised for malformed corpus files or datasets that violate an invariant."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class Stage(Enum):
    STAGE1 = 1
    STAGE2 = 2

    @property
    def n_classes(self) -> int:
        return 4 if self is Stage.STAGE1 else 2

    @classmethod
    def parse(cls, value: "Stage | int | str") -> "Stage":
        if isinstance(value, Stage):
            return value
        text = str(value).strip().lower().removeprefix("stage")
        try:
            return cls(int(text))
        except ValueError:
            raise ValueError(f"unknown stage {value!r}") from None


class Provenance(Enum):
    ORIGINAL = "original"
    OVERSAMPLED = "oversampled"
    SYNTHETIC = "synthetic"


def stage_index(severity: int, stage: Stage) -> int:
    """Map a 1..4 severity class to its 0-based class index within ``stage``."""
    if severity not in SEVERITY_DESCRIPTIONS:
        raise ValueError(f"severity must be in 1..4, got {severity!r}")
    if stage is Stage.STAGE1:
        return severity - 1
    return 0 if severity <= 2 else 1


def class_description(index: int, stage: Stage) -> str:
    if stage is Stage.STAGE1:
        return SEVERITY_DESCRIPTIONS[index + 1]
    return STAGE2_DESCRIPTIONS[index]


@dataclass(frozen=True)
class Report:
    id: str
    text: str
    label: int  # severity class 1..4

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CorpusError("report id must be a non-empty string")
        if not isinstance(self.text, str) or not self.text.strip():
            raise CorpusError(f"report {self.id!r} has empty text")
        if isinstance(self.label, bool) or self.label not in SEVERITY_DESCRIPTIONS:
            raise CorpusError(f"report {self.id!r} has label {self.label!r} outside 1..4")


@dataclass(frozen=True)
class Dataset:
    """An ordered, immutable collection of reports viewed through one label stage.

    Reports always keep their original severity class; ``stage`` decides how
    that class maps to the index the models see.
    """

    examples: tuple[Report, ...] = ()
    stage: Stage = Stage.STAGE1
    provenance: Provenance = Provenance.ORIGINAL
    _ids: frozenset = field(default=frozenset(), init=False, repr=False, compare=False)

    def __post_init__(self):
        examples = tuple(self.examples)
        object.__setattr__(self, "examples", examples)
        ids = [r.id for r in examples]
        if len(set(ids)) != len(ids):
            dup = next(i for i, c in Counter(ids).items() if c > 1)
            raise CorpusError(f"duplicate report id {dup!r}")
        object.__setattr__(self, "_ids", frozenset(ids))

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)

    @property
    def n_classes(self) -> int:
        return self.stage.n_classes

    @property
    def ids(self) -> list[str]:
        return [r.id for r in self.examples]

    @property
    def texts(self) -> list[str]:
        return [r.text for r in self.examples]

    def labels(self) -> np.ndarray:
        """Stage class indices, one per report, in dataset order."""
        return np.array([stage_index(r.label, self.stage) for r in self.examples], dtype=np.int64)

    def __contains__(self, report_id: object) -> bool:
        return report_id in self._ids

    def subset(self, indices: Iterable[int], provenance: Provenance | None = None) -> "Dataset":
        return Dataset(
            tuple(self.examples[i] for i in indices),
            self.stage,
            self.provenance if provenance is None else provenance,
        )


ClassDistribution = dict  # stage class index -> count


def class_distribution(dataset: Dataset) -> dict[int, int]:
    counts = {k: 0 for k in range(dataset.n_classes)}
    for r in dataset.examples:
        counts[stage_index(r.label, dataset.stage)] += 1
    return counts


def load_corpus(path: str | Path, format: str | None = None) -> Dataset:
    """Read a ``id,text,label`` CSV or JSONL corpus into a Stage-1 dataset.

    The format is inferred from the file suffix when not given. Every problem
    is reported as a :class:`CorpusError` carrying the offending line number.
    """
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt not in ("csv", "jsonl"):
        raise CorpusError(f"unsupported corpus format {fmt!r} (expected csv or jsonl)")
    if not path.is_file():
        raise FileNotFoundError(f"corpus file not found: {path}")
    rows = _read_csv(path) if fmt == "csv" else _read_jsonl(path)

    reports = []
    seen: dict[str, int] = {}
    for line, rid, text, label in rows:
        if rid in seen:
            raise CorpusError(f"duplicate id {rid!r} (first seen on line {seen[rid]})", line)
        seen[rid] = line
        try:
            reports.append(Report(rid, text, _parse_label(label)))
        except CorpusError as exc:
            raise CorpusError(str(exc), line) from None
    return Dataset(tuple(reports), Stage.STAGE1, Provenance.ORIGINAL)


def _parse_label(raw) -> int:
    if isinstance(raw, bool):
        raise CorpusError(f"label {raw!r} is not an integer in 1..4")
    if isinstance(raw, int):
        value = raw
    else:
        try:
            value = int(str(raw).strip())
        except ValueError:
            raise CorpusError(f"label {raw!r} is not an integer in 1..4") from None
    if value not in SEVERITY_DESCRIPTIONS:
        raise CorpusError(f"label {value} outside 1..4")
    return value


def _read_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        if [h.strip().lower() for h in header] != ["id", "text", "label"]:
            raise CorpusError(f"expected header id,text,label, got {','.join(header)}", 1)
        for row in reader:
            if not row:
                continue
            if len(row) != 3:
                raise CorpusError(f"expected 3 fields, got {len(row)}", reader.line_num)
            rid = row[0].strip()
            if not rid:
                raise CorpusError("missing id", reader.line_num)
            yield reader.line_num, rid, row[1], row[2]


def _read_jsonl(path: Path):
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"invalid JSON: {exc.msg}", line_no) from None
            if not isinstance(obj, dict):
                raise CorpusError("expected a JSON object", line_no)
            missing = [k for k in ("id", "text", "label") if k not in obj]
            if missing:
                raise CorpusError(f"missing field(s): {', '.join(missing)}", line_no)
            rid = obj["id"]
            if not isinstance(rid, str) or not rid.strip():
                raise CorpusError("missing id", line_no)
            if not isinstance(obj["text"], str):
                raise CorpusError("text must be a string", line_no)
            yield line_no, rid.strip(), obj["text"], obj["label"]


def save_corpus(dataset: Dataset, path: str | Path, format: str | None = None) -> None:
    path = Path(path)
    fmt = (format or path.suffix.lstrip(".")).lower()
    if fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["id", "text", "label"])
            for r in dataset.examples:
                writer.writerow([r.id, r.text, r.label])
    elif fmt == "jsonl":
        with open(path, "w", encoding="utf-8") as fh:
            for r in dataset.examples:
                fh.write(json.dumps({"id": r.id, "text": r.text, "label": r.label}, ensure_ascii=False) + "\n")
    else:
        raise CorpusError(f"unsupported corpus format {fmt!r}")


def map_to_stage2(dataset: Dataset) -> Dataset:
    if dataset.stage is Stage.STAGE2:
        raise CorpusError("dataset is already in stage 2")
    return Dataset(dataset.examples, Stage.STAGE2, dataset.provenance)


def with_stage(dataset: Dataset, stage: Stage) -> Dataset:
    return dataset if dataset.stage is stage else map_to_stage2(dataset)


def _by_class(dataset: Dataset) -> dict[int, list[int]]:
    groups: dict[int, list[int]] = {k: [] for k in range(dataset.n_classes)}
    for i, y in enumerate(dataset.labels()):
        groups[int(y)].append(i)
    return groups


def stratified_split(dataset: Dataset, train_fraction: float = 0.8, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Per-class seeded split; the test side gets ``floor(n_c * (1 - f))``, at least 1.

    Both halves keep the original dataset order.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    test_share = 1 - Fraction(str(train_fraction))
    rng = np.random.default_rng(seed)
    test_idx: set[int] = set()
    for cls, members in _by_class(dataset).items():
        if not members:
            continue
        if len(members) < 2:
            raise CorpusError(f"class {cls} has {len(members)} example(s); at least 2 are needed to split")
        n_test = max(1, math.floor(len(members) * test_share))
        chosen = rng.permutation(np.array(members))[:n_test]
        test_idx.update(int(i) for i in chosen)
    train = [i for i in range(len(dataset)) if i not in test_idx]
    test = [i for i in range(len(dataset)) if i in test_idx]
    return dataset.subset(train), dataset.subset(test)


def random_oversample(dataset: Dataset, seed: int = 0) -> Dataset:
    """Duplicate minority-class reports uniformly at random up to the majority count.

    Originals are kept in order; duplicates are appended class by class and
    get ids ``<id>#dup<N>``.
    """
    if len(dataset) == 0:
        raise CorpusError("cannot oversample an empty dataset")
    groups = _by_class(dataset)
    empty = [c for c, m in groups.items() if not m]
    if empty:
        raise CorpusError(f"cannot oversample: class(es) {empty} have no examples")
    target = max(len(m) for m in groups.values())
    rng = np.random.default_rng(seed)
    taken = set(dataset.ids)
    dup_counter: Counter = Counter()
    extra = []
    for cls in sorted(groups):
        members = groups[cls]
        need = target - len(members)
        if need == 0:
            continue
        for i in rng.choice(np.array(members), size=need, replace=True):
            src = dataset.examples[int(i)]
            while True:
                dup_counter[src.id] += 1
                new_id = f"{src.id}#dup{dup_counter[src.id]}"
                if new_id not in taken:
                    break
            taken.add(new_id)
            extra.append(Report(new_id, src.text, src.label))
    return Dataset(dataset.examples + tuple(extra), dataset.stage, Provenance.OVERSAMPLED)


def oversample_indices(labels: Sequence[int], seed: int = 0) -> np.ndarray:
    """Row indices realising :func:`random_oversample` on a label vector.

    Useful when rows are already vectorized: ``X[idx]`` duplicates rows exactly
    as the dataset-level function duplicates reports.
    """
    labels = np.asarray(labels)
    classes = np.unique(labels)
    target = max(int((labels == c).sum()) for c in classes)
    rng = np.random.default_rng(seed)
    extra = []
    for c in classes:
        members = np.flatnonzero(labels == c)
        need = target - len(members)
        if need:
            extra.append(rng.choice(members, size=need, replace=True))
    return np.concatenate([np.arange(len(labels))] + extra) if extra else np.arange(len(labels))
