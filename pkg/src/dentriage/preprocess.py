"""Report text pipeline: tokenize, spell-correct, drop stopwords, lemmatize."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

NEGATIONS = frozenset({"no", "not", "nor", "without", "cannot", "can't", "non", "never", "none", "neither"})

# ~120 common English function words; negations deliberately absent.
DEFAULT_STOPWORDS = frozenset(
    """
    a about above after again against all also am an and any are as at be because been before
    being below between both but by can could did do does doing down during each few for from
    further had has have having he her here hers herself him himself his how i if in into is it
    its itself just me more most my myself of off on once only or other our ours ourselves out
    over own same she should so some such than that the their theirs them themselves then there
    these they this those through to too under until up very was we were what when where which
    while who whom why will with would you your yours yourself yourselves based seen per may
    """.split()
)

# Irregular and domain plurals the suffix rules get wrong.
DEFAULT_LEMMAS: dict[str, str] = {
    "cortices": "cortex",
    "apices": "apex",
    "teeth": "tooth",
    "maxillae": "maxilla",
    "foramina": "foramen",
    "sinuses": "sinus",
    "diagnoses": "diagnosis",
    "analyses": "analysis",
    "metastases": "metastasis",
    "radiolucencies": "radiolucency",
    "canals": "canal",
    "was": "be",
    "were": "be",
    "is": "be",
    "are": "be",
    "has": "have",
    "had": "have",
    "caused": "cause",
    "seen": "see",
    "found": "find",
}

# Seed vocabulary for spell correction and lemma confirmation; corpus counts are added on top.
DOMAIN_TERMS = """
lesion tumor tooth root cortex cortical continuity loss mandible maxilla maxillary mandibular
sinus canal apex periapical resorption fracture caries carious pulp pulpal furcation bone
alveolar crest buccal lingual palatal incisive mesiodens supernumerary impacted inverted
osteomyelitis sarcomatosis chondrosarcoma osteosarcoma ameloblastoma malignancy biopsy
radiolucent radiolucency radiopaque expansile destructive multilocular fibro osseous infected
erosive normal trabecular pattern intact detect detected missing mucosal thickening torus
retained deciduous molar premolar erupted styloid process rotation enamel pearl distal mesial
temporomandibular joint condyle ramus symphysis border defined mixed anterior posterior
""".split()


TOKEN_RE = re.compile(r"(?:[^\W_]|[#/])+")
VALID_TOKEN_RE = re.compile(r"^(?:[^\W_]|[#/])+$")


@dataclass(frozen=True)
class Lexicon:
    stopwords: frozenset = DEFAULT_STOPWORDS
    lemma_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_LEMMAS))
    vocabulary: Mapping[str, int] = field(default_factory=dict)
    _correctors: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "stopwords", frozenset(w.lower() for w in self.stopwords))
        bad = self.stopwords & NEGATIONS
        if bad:
            raise ValueError(f"stopword list must not contain negations: {sorted(bad)}")
        for src, lemma in self.lemma_map.items():
            if not VALID_TOKEN_RE.match(lemma) or lemma != lemma.lower():
                raise ValueError(f"lemma {lemma!r} for {src!r} is not a valid token")

    def with_counts(self, token_lists: Iterable[Iterable[str]]) -> "Lexicon":
        """Return a copy whose vocabulary also counts every token in ``token_lists``."""
        counts = Counter(self.vocabulary)
        for tokens in token_lists:
            counts.update(tokens)
        return Lexicon(self.stopwords, dict(self.lemma_map), dict(counts))

    @classmethod
    def from_files(cls, stopwords: str | Path | None = None, lemmas: str | Path | None = None,
                   vocabulary: str | Path | None = None) -> "Lexicon":
        stop = DEFAULT_STOPWORDS
        if stopwords is not None:
            stop = frozenset(
                line.strip().lower() for line in Path(stopwords).read_text(encoding="utf-8").splitlines()
                if line.strip() and not line.startswith("#")
            )
        lemma_map = dict(DEFAULT_LEMMAS)
        if lemmas is not None:
            lemma_map = dict(_read_tsv_pairs(Path(lemmas)))
        vocab: dict[str, int] = {}
        if vocabulary is not None:
            vocab = {k: int(v) for k, v in _read_tsv_pairs(Path(vocabulary))}
        return cls(stop, lemma_map, vocab)


def _read_tsv_pairs(path: Path):
    for n, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValueError(f"{path}:{n}: expected two tab-separated columns")
        yield parts[0].strip().lower(), parts[1].strip()


def default_lexicon() -> Lexicon:
    return Lexicon(DEFAULT_STOPWORDS, dict(DEFAULT_LEMMAS), {t: 1 for t in DOMAIN_TERMS})


@dataclass(frozen=True)
class PipelineConfig:
    enable_stopwords: bool = True
    enable_lemmatize: bool = True
    enable_spellcheck: bool = True
    max_edit_distance: int = 2

    def __post_init__(self):
        if self.max_edit_distance not in (1, 2):
            raise ValueError("max_edit_distance must be 1 or 2")


def tokenize(text: str) -> list[str]:
    raw = TOKEN_RE.findall(text.lower())
    out: list[str] = []
    i = 0
    while i < len(raw):
        tok = raw[i]
        # "tooth # 8" -> "#8"
        if tok == "#" and i + 1 < len(raw) and raw[i + 1].isdigit():
            out.append("#" + raw[i + 1])
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def remove_stopwords(tokens: list[str], lexicon: Lexicon) -> list[str]:
    return [t for t in tokens if t in NEGATIONS or t not in lexicon.stopwords]


def _suffix_lemma(token: str, vocabulary: Mapping[str, int]) -> str:
    if len(token) > 4 and token.endswith("ies"):
        return token[:-3] + "y"
    if token.endswith("sses"):
        return token[:-2]
    if len(token) > 3 and token.endswith("s") and not token.endswith(("ss", "us", "is")):
        return token[:-1]
    for suffix in ("ing", "ed"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            stem = token[: -len(suffix)]
            if stem + "e" in vocabulary:
                return stem + "e"
            if stem in vocabulary:
                return stem
    return token


def lemmatize(tokens: list[str], lexicon: Lexicon) -> list[str]:
    """Dictionary lookup first, then suffix rules.

    ``-ing``/``-ed`` are only stripped when the resulting stem (or stem + "e")
    is a known vocabulary term; the plural rules apply unconditionally.
    """
    out = []
    for t in tokens:
        lemma = lexicon.lemma_map.get(t)
        if lemma is None:
            lemma = _suffix_lemma(t, lexicon.vocabulary) if t.isalpha() else t
        out.append(lemma)
    return out


def levenshtein(a: str, b: str, limit: int | None = None) -> int:
    """Edit distance with unit costs; returns ``limit + 1`` early once ``limit`` is exceeded."""
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if limit is not None and len(a) - len(b) > limit:
        return limit + 1
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i] + [0] * len(b)
        for j, cb in enumerate(b, start=1):
            cur[j] = min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (ca != cb))
        if limit is not None and min(cur) > limit:
            return limit + 1
        prev = cur
    return prev[-1]


class _Corrector:
    def __init__(self, vocabulary: Mapping[str, int], max_edit_distance: int):
        self.vocabulary = vocabulary
        self.k = max_edit_distance
        self.by_length: dict[int, list[str]] = {}
        for term in vocabulary:
            self.by_length.setdefault(len(term), []).append(term)
        self.cache: dict[str, str] = {}

    def correct(self, token: str) -> str:
        if token in self.vocabulary or not token.isalpha():
            return token
        hit = self.cache.get(token)
        if hit is not None:
            return hit
        best = None
        for length in range(len(token) - self.k, len(token) + self.k + 1):
            for term in self.by_length.get(length, ()):
                d = levenshtein(token, term, self.k)
                if d > self.k:
                    continue
                key = (d, -self.vocabulary[term], term)
                if best is None or key < best:
                    best = key
        result = token if best is None else best[2]
        self.cache[token] = result
        return result


def correct_spelling(tokens: list[str], lexicon: Lexicon, max_edit_distance: int = 2) -> list[str]:
    """Replace out-of-vocabulary alphabetic tokens by their nearest vocabulary term.

    Ties on distance go to the more frequent term, then the lexicographically
    smaller one. Tokens carrying digits, ``#`` or ``/`` (tooth designators,
    fractions) are never rewritten.
    """
    if max_edit_distance not in (1, 2):
        raise ValueError("max_edit_distance must be 1 or 2")
    if not lexicon.vocabulary:
        return list(tokens)
    corrector = lexicon._correctors.get(max_edit_distance)
    if corrector is None:
        corrector = lexicon._correctors[max_edit_distance] = _Corrector(lexicon.vocabulary, max_edit_distance)
    return [corrector.correct(t) for t in tokens]


def run_pipeline(text: str, config: PipelineConfig, lexicon: Lexicon) -> list[str]:
    tokens = tokenize(text)
    if config.enable_spellcheck:
        tokens = correct_spelling(tokens, lexicon, config.max_edit_distance)
    if config.enable_stopwords:
        tokens = remove_stopwords(tokens, lexicon)
    if config.enable_lemmatize:
        tokens = lemmatize(tokens, lexicon)
    return tokens
