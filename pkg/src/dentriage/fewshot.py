"""Few-shot sentence-pair fine-tuning with an MLP head (the FSBM path).

A frozen embedding provider maps report text to vectors. Sentence pairs
sampled from a per-class support set train an affine projection head so that
the cosine of projected embeddings matches the same-class target (siamese
cosine regression). All training texts are then projected and an MLP from
:mod:`dentriage.classifiers` is fit on top.
"""

from __future__ import annotations

import hashlib
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import httpx
import numpy as np

from . import classifiers
from .corpus import Dataset, Report
from .preprocess import Lexicon, PipelineConfig, run_pipeline

log = logging.getLogger(__name__)

REMOTE_BATCH_CAP = 64


class EmbeddingError(RuntimeError):
    pass


class EmbeddingTransportError(EmbeddingError):
    pass


class DegenerateProjectionError(ValueError):
    pass


class EmbeddingProvider:
    """Frozen text embedder with a fixed output dimension."""

    def __init__(self, name: str, dim: int, embed_fn: Callable[[str], np.ndarray],
                 batch_fn: Callable[[Sequence[str]], np.ndarray] | None = None,
                 config: dict | None = None):
        self.name = name
        self.dim = int(dim)
        self._embed_fn = embed_fn
        self._batch_fn = batch_fn
        self.config = dict(config or {"kind": name})

    def embed(self, text: str) -> np.ndarray:
        return self.embed_many([text])[0]

    def embed_many(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            return np.zeros((0, self.dim))
        if self._batch_fn is not None:
            out = np.asarray(self._batch_fn(texts), dtype=float)
        else:
            out = np.stack([np.asarray(self._embed_fn(t), dtype=float) for t in texts])
        if out.shape != (len(texts), self.dim):
            raise EmbeddingError(f"provider {self.name!r} returned shape {out.shape}, expected {(len(texts), self.dim)}")
        return out

    def __repr__(self) -> str:
        return f"EmbeddingProvider({self.name!r}, dim={self.dim})"


_HASH_PIPELINE = PipelineConfig(enable_stopwords=True, enable_lemmatize=True, enable_spellcheck=False)


def hashed_embedder(dim: int = 256, seed: int = 0, lexicon: Lexicon | None = None) -> EmbeddingProvider:
    """Signed feature hashing of preprocessed tokens into ``dim`` buckets, L2-normalised."""
    if dim < 8:
        raise ValueError("hashed embedder needs dim >= 8")
    lexicon = lexicon or Lexicon()
    key = int(seed).to_bytes(8, "little", signed=True)
    cache: dict[str, tuple[int, float]] = {}

    def bucket(token: str) -> tuple[int, float]:
        hit = cache.get(token)
        if hit is None:
            h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=key).digest(), "little")
            hit = cache[token] = (h % dim, 1.0 if (h >> 63) & 1 else -1.0)
        return hit

    def embed(text: str) -> np.ndarray:
        vec = np.zeros(dim)
        for tok in run_pipeline(text, _HASH_PIPELINE, lexicon):
            idx, sign = bucket(tok)
            vec[idx] += sign
        norm = np.linalg.norm(vec)
        return vec / norm if norm > 0 else vec

    return EmbeddingProvider("hashed", dim, embed, config={"kind": "hashed", "dim": dim, "seed": int(seed)})


def remote_embedder(endpoint: str, dim: int, timeout: float = 30.0, max_retries: int = 2,
                    backoff: float = 0.5, batch_size: int = REMOTE_BATCH_CAP, max_in_flight: int = 1,
                    transport: httpx.BaseTransport | None = None,
                    sleep: Callable[[float], None] = time.sleep) -> EmbeddingProvider:
    """Provider backed by an HTTP service speaking ``{"texts": [...]}`` -> ``{"embeddings": [...], "dim": N}``.

    Texts are sent in batches of at most 64; batches may be in flight
    concurrently up to ``max_in_flight``, and results keep input order.
    """
    batch_size = max(1, min(int(batch_size), REMOTE_BATCH_CAP))
    client = httpx.Client(timeout=timeout, transport=transport)

    def post(batch: list[str]) -> np.ndarray:
        last: Exception | None = None
        for attempt in range(max_retries + 1):
            if attempt:
                sleep(backoff * 2 ** (attempt - 1))
            try:
                resp = client.post(endpoint, json={"texts": batch})
            except httpx.TransportError as exc:
                last = exc
                log.warning("embedding request failed (attempt %d): %s", attempt + 1, exc)
                continue
            if resp.status_code >= 500:
                last = EmbeddingTransportError(f"server error {resp.status_code}")
                log.warning("embedding server returned %d (attempt %d)", resp.status_code, attempt + 1)
                continue
            if resp.status_code != 200:
                raise EmbeddingError(f"embedding service returned HTTP {resp.status_code}")
            return _parse_embeddings(resp.json(), len(batch), dim)
        raise EmbeddingTransportError(f"embedding service unreachable after {max_retries + 1} attempts: {last}")

    def embed_batch(texts: Sequence[str]) -> np.ndarray:
        batches = [list(texts[i:i + batch_size]) for i in range(0, len(texts), batch_size)]
        if max_in_flight > 1 and len(batches) > 1:
            with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
                parts = list(pool.map(post, batches))
        else:
            parts = [post(b) for b in batches]
        return np.concatenate(parts, axis=0)

    return EmbeddingProvider(
        "remote", dim, lambda t: embed_batch([t])[0], embed_batch,
        config={"kind": "remote", "endpoint": endpoint, "dim": int(dim)},
    )


def _parse_embeddings(payload: Any, n: int, dim: int) -> np.ndarray:
    if not isinstance(payload, dict) or "embeddings" not in payload:
        raise EmbeddingError("embedding response lacks an 'embeddings' field")
    if "dim" in payload and int(payload["dim"]) != dim:
        raise EmbeddingError(f"dimension mismatch: service reports {payload['dim']}, expected {dim}")
    try:
        arr = np.asarray(payload["embeddings"], dtype=float)
    except (TypeError, ValueError):
        raise EmbeddingError("embeddings are not a numeric matrix") from None
    if arr.ndim != 2 or arr.shape[1] != dim:
        raise EmbeddingError(f"dimension mismatch: got vectors of shape {arr.shape[1:]}, expected ({dim},)")
    if arr.shape[0] != n:
        raise EmbeddingError(f"asked for {n} embeddings, got {arr.shape[0]}")
    if not np.isfinite(arr).all():
        raise EmbeddingError("embedding service returned non-finite values")
    return arr


def provider_from_config(config: dict, **kwargs) -> EmbeddingProvider:
    kind = config.get("kind")
    if kind == "hashed":
        return hashed_embedder(int(config["dim"]), int(config.get("seed", 0)))
    if kind == "remote":
        return remote_embedder(config["endpoint"], int(config["dim"]), **kwargs)
    raise ValueError(f"cannot rebuild embedding provider of kind {kind!r}")


# --- pairs -----------------------------------------------------------------

@dataclass(frozen=True)
class PairExample:
    text_a: str
    text_b: str
    target: float

    def __post_init__(self):
        if self.target not in (0.0, 1.0):
            raise ValueError("pair target must be 0.0 or 1.0")


def sample_support_set(train: Dataset, per_class: int = 200, seed: int = 0) -> Dataset:
    """Draw exactly ``per_class`` reports from each class.

    Classes with at least ``per_class`` reports are sampled without
    replacement, smaller ones with replacement; repeated picks get a
    ``#supN`` id suffix so ids stay unique.
    """
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    labels = train.labels()
    rng = np.random.default_rng(seed)
    picked: list[Report] = []
    seen: dict[str, int] = {}
    for c in range(train.n_classes):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            raise ValueError(f"class {c} has no training examples")
        replace = len(members) < per_class
        for i in rng.choice(members, size=per_class, replace=replace):
            r = train.examples[int(i)]
            n = seen.get(r.id, 0)
            seen[r.id] = n + 1
            picked.append(r if n == 0 else Report(f"{r.id}#sup{n}", r.text, r.label))
    return Dataset(tuple(picked), train.stage, train.provenance)


def generate_pairs(support: Dataset, pairs_per_anchor: int = 20, seed: int = 0) -> list[PairExample]:
    """Every support report anchors ``pairs_per_anchor // 2`` same-class and the rest different-class pairs."""
    if pairs_per_anchor < 1:
        raise ValueError("pairs_per_anchor must be >= 1")
    labels = support.labels()
    present = np.unique(labels)
    if len(present) < 2:
        raise ValueError("pair generation needs at least two classes")
    members = {int(c): np.flatnonzero(labels == c) for c in present}
    small = [c for c, m in members.items() if len(m) < 2]
    if small:
        raise ValueError(f"class(es) {small} have a single example, so no positive partner exists")
    n_pos = pairs_per_anchor // 2
    n_neg = pairs_per_anchor - n_pos
    rng = np.random.default_rng(seed)
    texts = support.texts
    pairs = []
    for i, c in enumerate(labels):
        same = members[int(c)]
        same = same[same != i]
        other = np.flatnonzero(labels != c)
        for j in rng.choice(same, size=n_pos, replace=True):
            pairs.append(PairExample(texts[i], texts[int(j)], 1.0))
        for j in rng.choice(other, size=n_neg, replace=True):
            pairs.append(PairExample(texts[i], texts[int(j)], 0.0))
    return pairs


# --- projection head -------------------------------------------------------

@dataclass(frozen=True)
class ProjectionHead:
    weights: np.ndarray  # (dim_in, dim_out)
    bias: np.ndarray  # (dim_out,)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        b = np.array(self.bias, dtype=float)
        if w.ndim != 2 or b.shape != (w.shape[1],):
            raise ValueError("head weights must be (dim_in, dim_out) with a dim_out bias")
        if w.shape[1] < 2:
            raise ValueError("head dim_out must be >= 2")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("head parameters must be finite")
        w.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", b)

    @property
    def dim_in(self) -> int:
        return self.weights.shape[0]

    @property
    def dim_out(self) -> int:
        return self.weights.shape[1]

    @classmethod
    def identity(cls, dim_in: int, dim_out: int | None = None) -> "ProjectionHead":
        dim_out = dim_in if dim_out is None else dim_out
        return cls(np.eye(dim_in, dim_out), np.zeros(dim_out))

    def project(self, E: np.ndarray) -> np.ndarray:
        return np.asarray(E, dtype=float) @ self.weights + self.bias


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ValueError("cosine similarity is undefined for a zero vector")
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def pair_loss_grad(head: ProjectionHead, Ea: np.ndarray, Eb: np.ndarray, targets: np.ndarray):
    """Mean squared cosine error over a batch of embedded pairs, with head gradients.

    Returns ``(per_pair_losses, dW, db)`` where the gradients are of the mean loss.
    """
    Ea = np.atleast_2d(Ea)
    Eb = np.atleast_2d(Eb)
    targets = np.atleast_1d(np.asarray(targets, dtype=float))
    U = head.project(Ea)
    V = head.project(Eb)
    nu = np.linalg.norm(U, axis=1)
    nv = np.linalg.norm(V, axis=1)
    if (nu == 0).any() or (nv == 0).any():
        bad = int(np.flatnonzero((nu == 0) | (nv == 0))[0])
        raise DegenerateProjectionError(f"pair {bad} projects to a zero vector")
    dot = (U * V).sum(axis=1)
    cos = dot / (nu * nv)
    err = cos - targets
    losses = err * err
    g = (2.0 * err / len(targets))[:, None]
    dU = g * (V / (nu * nv)[:, None] - cos[:, None] * U / (nu * nu)[:, None])
    dV = g * (U / (nu * nv)[:, None] - cos[:, None] * V / (nv * nv)[:, None])
    dW = Ea.T @ dU + Eb.T @ dV
    db = (dU + dV).sum(axis=0)
    return losses, dW, db


def _check_dims(head: ProjectionHead, provider: EmbeddingProvider):
    if provider.dim != head.dim_in:
        raise ValueError(f"provider dim {provider.dim} does not match head dim_in {head.dim_in}")


def pair_loss(head: ProjectionHead, pair: PairExample, provider: EmbeddingProvider) -> float:
    """``(cos(h(e_a), h(e_b)) - target)**2`` for one pair."""
    _check_dims(head, provider)
    E = provider.embed_many([pair.text_a, pair.text_b])
    losses, _, _ = pair_loss_grad(head, E[:1], E[1:], np.array([pair.target]))
    return float(losses[0])


class _EmbeddingCache:
    def __init__(self, provider: EmbeddingProvider, texts: Sequence[str]):
        unique = list(dict.fromkeys(texts))
        self.row = {t: i for i, t in enumerate(unique)}
        self.E = provider.embed_many(unique)

    def rows(self, texts: Sequence[str]) -> np.ndarray:
        return self.E[[self.row[t] for t in texts]]


def _embed_pairs(pairs: Sequence[PairExample], provider: EmbeddingProvider):
    cache = _EmbeddingCache(provider, [p.text_a for p in pairs] + [p.text_b for p in pairs])
    Ea = cache.rows([p.text_a for p in pairs])
    Eb = cache.rows([p.text_b for p in pairs])
    T = np.array([p.target for p in pairs])
    return Ea, Eb, T


def mean_pair_loss(head: ProjectionHead, pairs: Sequence[PairExample], provider: EmbeddingProvider) -> float:
    _check_dims(head, provider)
    Ea, Eb, T = _embed_pairs(pairs, provider)
    losses, _, _ = pair_loss_grad(head, Ea, Eb, T)
    return float(losses.mean())


def fine_tune_head(head: ProjectionHead, pairs: Sequence[PairExample], provider: EmbeddingProvider,
                   epochs: int = 10, lr: float = 0.01, seed: int = 0, batch_size: int = 16) -> ProjectionHead:
    """Mini-batch SGD on the mean pair loss, reshuffling pairs every epoch with a seeded RNG."""
    if not pairs:
        raise ValueError("fine-tuning needs at least one pair")
    if lr < 0 or not math.isfinite(lr):
        raise ValueError("learning rate must be a finite non-negative number")
    _check_dims(head, provider)
    if lr == 0 or epochs == 0:
        return head
    Ea, Eb, T = _embed_pairs(pairs, provider)
    W = np.array(head.weights)
    b = np.array(head.bias)
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        order = rng.permutation(len(pairs))
        total = 0.0
        for start in range(0, len(order), batch_size):
            rows = order[start:start + batch_size]
            current = ProjectionHead.__new__(ProjectionHead)
            object.__setattr__(current, "weights", W)
            object.__setattr__(current, "bias", b)
            losses, dW, db = pair_loss_grad(current, Ea[rows], Eb[rows], T[rows])
            if not np.isfinite(losses).all():
                bad = pairs[int(rows[np.flatnonzero(~np.isfinite(losses))[0]])]
                raise FloatingPointError(f"non-finite pair loss for pair {bad!r}")
            W -= lr * dW
            b -= lr * db
            total += float(losses.sum())
        log.debug("head epoch %d mean pair loss %.6f", epoch, total / len(pairs))
    return ProjectionHead(W, b)


# --- FSBM ------------------------------------------------------------------

@dataclass(frozen=True)
class FsbmConfig:
    per_class: int = 200
    pairs_per_anchor: int = 20
    epochs: int = 10
    lr: float = 0.01
    head_dim_out: int | None = None
    batch_size: int = 16
    mlp_hyperparams: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FsbmModel:
    provider: EmbeddingProvider
    head: ProjectionHead
    classifier: classifiers.TrainedModel

    def __post_init__(self):
        if self.classifier.n_features != self.head.dim_out:
            raise ValueError("classifier input size must equal head dim_out")

    def to_dict(self) -> dict:
        return {
            "format": "dentriage.fsbm",
            "provider": self.provider.config,
            "head": {"weights": self.head.weights.tolist(), "bias": self.head.bias.tolist()},
            "classifier": classifiers.model_to_dict(self.classifier),
        }

    @classmethod
    def from_dict(cls, data: dict, provider: EmbeddingProvider | None = None) -> "FsbmModel":
        if data.get("format") != "dentriage.fsbm":
            raise ValueError("not a serialized FSBM model")
        provider = provider or provider_from_config(data["provider"])
        head = ProjectionHead(np.array(data["head"]["weights"]), np.array(data["head"]["bias"]))
        return cls(provider, head, classifiers.model_from_dict(data["classifier"]))


def _derive_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def fsbm_fit(train: Dataset, provider: EmbeddingProvider, config: FsbmConfig | None = None,
             seed: int = 0, head: ProjectionHead | None = None) -> FsbmModel:
    """Support sampling, pair generation, head fine-tuning, then an MLP on projected embeddings."""
    config = config or FsbmConfig()
    labels = train.labels()
    if len(np.unique(labels)) < 2:
        raise ValueError("FSBM needs at least two classes in the training data")
    support_seed, pair_seed, tune_seed, mlp_seed = _derive_seeds(seed, 4)
    support = sample_support_set(train, config.per_class, support_seed)
    pairs = generate_pairs(support, config.pairs_per_anchor, pair_seed)
    dim_out = config.head_dim_out or provider.dim
    head = head or ProjectionHead.identity(provider.dim, dim_out)
    head = fine_tune_head(head, pairs, provider, config.epochs, config.lr, tune_seed, config.batch_size)
    Z = head.project(provider.embed_many(train.texts))
    spec = classifiers.ClassifierSpec("MLP", dict(config.mlp_hyperparams), mlp_seed)
    clf = classifiers.fit(spec, Z, labels, n_classes=train.n_classes)
    return FsbmModel(provider, head, clf)


def fsbm_predict_proba(model: FsbmModel, texts: Sequence[str]) -> np.ndarray:
    Z = model.head.project(model.provider.embed_many(texts))
    return classifiers.predict_proba(model.classifier, Z)


def fsbm_predict_many(model: FsbmModel, texts: Sequence[str]) -> np.ndarray:
    return np.argmax(fsbm_predict_proba(model, texts), axis=1)


def fsbm_predict(model: FsbmModel, text: str) -> int:
    return int(fsbm_predict_many(model, [text])[0])
