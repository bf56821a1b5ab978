"""TF-IDF vectorization over preprocessed token lists."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import Dataset
from .preprocess import Lexicon, PipelineConfig, run_pipeline


@dataclass(frozen=True)
class Vocabulary:
    index: dict[str, int]
    doc_freq: dict[str, int]
    n_docs: int

    def __len__(self) -> int:
        return len(self.index)

    @property
    def terms(self) -> list[str]:
        return sorted(self.index, key=self.index.__getitem__)

    def dump_tsv(self, path: str | Path) -> None:
        lines = [f"{t}\t{self.index[t]}\t{self.doc_freq[t]}" for t in self.terms]
        Path(path).write_text("\n".join(lines) + ("\n" if lines else ""), encoding="utf-8")

    @classmethod
    def load_tsv(cls, path: str | Path, n_docs: int) -> "Vocabulary":
        index, df = {}, {}
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            term, col, freq = line.split("\t")
            index[term] = int(col)
            df[term] = int(freq)
        return cls(index, df, n_docs)

    def to_dict(self) -> dict:
        return {"terms": self.terms, "doc_freq": [self.doc_freq[t] for t in self.terms], "n_docs": self.n_docs}

    @classmethod
    def from_dict(cls, data: dict) -> "Vocabulary":
        terms = data["terms"]
        return cls({t: i for i, t in enumerate(terms)}, dict(zip(terms, data["doc_freq"])), int(data["n_docs"]))


@dataclass(frozen=True)
class SparseVector:
    entries: dict[int, float]
    dim: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        for col, value in self.entries.items():
            out[col] = value
        return out

    def norm(self) -> float:
        return math.sqrt(sum(v * v for v in self.entries.values()))


def build_vocabulary(docs: Sequence[Sequence[str]], min_df: int = 1) -> Vocabulary:
    if not docs:
        raise ValueError("cannot build a vocabulary from zero documents")
    df: Counter = Counter()
    first_seen: dict[str, int] = {}
    for doc in docs:
        for term in dict.fromkeys(doc):
            df[term] += 1
            first_seen.setdefault(term, len(first_seen))
    kept = [t for t in sorted(first_seen, key=first_seen.__getitem__) if df[t] >= min_df]
    return Vocabulary({t: i for i, t in enumerate(kept)}, {t: df[t] for t in kept}, len(docs))


def idf(term: str, vocab: Vocabulary) -> float:
    """Smoothed inverse document frequency ``ln((1 + N) / (1 + df)) + 1``."""
    if term not in vocab.doc_freq:
        raise KeyError(f"term {term!r} is not in the vocabulary")
    return math.log((1 + vocab.n_docs) / (1 + vocab.doc_freq[term])) + 1.0


def tfidf_vector(doc: Sequence[str], vocab: Vocabulary) -> SparseVector:
    counts = Counter(t for t in doc if t in vocab.index)
    raw = {vocab.index[t]: n * idf(t, vocab) for t, n in counts.items()}
    norm = math.sqrt(sum(v * v for v in raw.values()))
    if norm == 0.0:
        return SparseVector({}, len(vocab))
    return SparseVector({c: v / norm for c, v in sorted(raw.items())}, len(vocab))


def to_dense(vectors: Sequence[SparseVector], dim: int | None = None) -> np.ndarray:
    if dim is None:
        dim = vectors[0].dim if vectors else 0
    out = np.zeros((len(vectors), dim))
    for i, v in enumerate(vectors):
        for col, value in v.entries.items():
            out[i, col] = value
    return out


def preprocess_texts(texts: Sequence[str], config: PipelineConfig, lexicon: Lexicon) -> list[list[str]]:
    return [run_pipeline(t, config, lexicon) for t in texts]


def vectorize_dataset(
    dataset: Dataset,
    config: PipelineConfig,
    lexicon: Lexicon,
    vocab: Vocabulary | None = None,
    min_df: int = 1,
) -> tuple[list[SparseVector], Vocabulary]:
    """Vectorize every report; a new vocabulary is fit on ``dataset`` unless one is passed.

    Pass the training vocabulary when transforming a test split so unseen
    terms are dropped rather than indexed.
    """
    if len(dataset) == 0:
        raise ValueError("cannot vectorize an empty dataset")
    docs = preprocess_texts(dataset.texts, config, lexicon)
    if vocab is None:
        vocab = build_vocabulary(docs, min_df=min_df)
    return [tfidf_vector(d, vocab) for d in docs], vocab
