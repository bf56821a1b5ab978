import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dentriage.corpus import Dataset, Report
from dentriage.features import (
    SparseVector,
    Vocabulary,
    build_vocabulary,
    idf,
    tfidf_vector,
    to_dense,
    vectorize_dataset,
)
from dentriage.preprocess import PipelineConfig, default_lexicon

from oracles import dense_tfidf

CORPUS = [["lesion", "lesion", "cortex"], ["lesion", "tooth"], ["tooth", "root"]]


def test_build_vocabulary_examples():
    v = build_vocabulary([["a", "b"], ["b", "c"]])
    assert v.index == {"a": 0, "b": 1, "c": 2}
    assert v.doc_freq == {"a": 1, "b": 2, "c": 1} and v.n_docs == 2
    assert build_vocabulary([["a", "b"], ["b", "c"]], min_df=2).index == {"b": 0}
    single = build_vocabulary([["a"]])
    assert single.index == {"a": 0} and single.n_docs == 1
    with pytest.raises(ValueError):
        build_vocabulary([])


def test_idf_examples():
    v = build_vocabulary([["x", "y"], ["x", "y"], ["x", "z"]])
    assert idf("x", v) == 1.0
    assert idf("y", v) == pytest.approx(1.287682, abs=1e-6)
    assert idf("z", v) == pytest.approx(1.693147, abs=1e-6)
    with pytest.raises(KeyError):
        idf("missing", v)


def test_tfidf_hand_example():
    v = build_vocabulary(CORPUS)
    d1 = tfidf_vector(CORPUS[0], v)
    assert d1.entries[v.index["lesion"]] == pytest.approx(0.835591, abs=1e-6)
    assert d1.entries[v.index["cortex"]] == pytest.approx(0.549352, abs=1e-6)
    assert d1.dim == 4


def test_out_of_vocabulary_doc_is_zero():
    v = build_vocabulary(CORPUS)
    z = tfidf_vector(["unseen", "words"], v)
    assert z.entries == {} and z.dim == len(v) and z.norm() == 0.0


def test_vocabulary_tsv_round_trip(tmp_path):
    v = build_vocabulary(CORPUS)
    v.dump_tsv(tmp_path / "vocab.tsv")
    assert (tmp_path / "vocab.tsv").read_text().splitlines()[0] == "lesion\t0\t2"
    back = Vocabulary.load_tsv(tmp_path / "vocab.tsv", v.n_docs)
    assert back == v
    assert Vocabulary.from_dict(v.to_dict()) == v


def _ds(texts):
    return Dataset(tuple(Report(f"r{i}", t, 1) for i, t in enumerate(texts)))


def test_vectorize_dataset_shapes_and_duplicates():
    texts = ["lesion lesion cortex", "lesion tooth", "tooth root", "lesion tooth"]
    vecs, vocab = vectorize_dataset(_ds(texts), PipelineConfig(False, False, False), default_lexicon())
    assert len(vecs) == 4 and {v.dim for v in vecs} == {len(vocab)}
    assert vecs[1] == vecs[3]
    with pytest.raises(ValueError):
        vectorize_dataset(Dataset(), PipelineConfig(), default_lexicon())


def test_train_vocabulary_applied_to_test():
    cfg = PipelineConfig(False, False, False)
    _, vocab = vectorize_dataset(_ds(["lesion tooth", "root"]), cfg, default_lexicon())
    test_vecs, same = vectorize_dataset(_ds(["lesion maxilla maxilla"]), cfg, default_lexicon(), vocab)
    assert same is vocab
    assert set(test_vecs[0].entries) == {vocab.index["lesion"]}
    assert test_vecs[0].entries[vocab.index["lesion"]] == pytest.approx(1.0)


terms = st.sampled_from([f"t{i}" for i in range(12)])
corpora = st.lists(st.lists(terms, min_size=0, max_size=10), min_size=1, max_size=8)


@given(corpora)
def test_oracle_equivalence(docs):
    vocab = build_vocabulary(docs)
    oracle_terms, oracle_rows = dense_tfidf(docs)
    assert vocab.terms == oracle_terms
    got = to_dense([tfidf_vector(d, vocab) for d in docs], len(vocab))
    assert np.abs(got - np.array(oracle_rows).reshape(got.shape)).max(initial=0.0) <= 1e-9


@given(corpora)
def test_unit_norm_and_nonzero_entries(docs):
    vocab = build_vocabulary(docs)
    for d in docs:
        v = tfidf_vector(d, vocab)
        assert all(x != 0 for x in v.entries.values())
        assert all(c < v.dim for c in v.entries)
        if v.entries:
            assert abs(v.norm() - 1.0) <= 1e-9


@given(st.integers(1, 500))
def test_idf_strictly_decreasing(n):
    vals = [math.log((1 + n) / (1 + df)) + 1 for df in range(1, n + 1)]
    v = Vocabulary({f"t{df}": df - 1 for df in range(1, n + 1)}, {f"t{df}": df for df in range(1, n + 1)}, n)
    got = [idf(f"t{df}", v) for df in range(1, n + 1)]
    assert got == pytest.approx(vals)
    assert all(a > b for a, b in zip(got, got[1:]))


def test_sparse_to_dense():
    v = SparseVector({1: 0.6, 3: 0.8}, 4)
    assert v.to_dense().tolist() == [0.0, 0.6, 0.0, 0.8]
    assert to_dense([v], 4).shape == (1, 4)
