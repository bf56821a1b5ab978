"""Deterministic synthetic radiology-report corpora.

Stands in for the private report database. Each severity class owns a
lexicon of finding sentences; ``confusion`` controls how often a sentence is
borrowed from a neighbouring severity class, which is what makes the
four-class task harder than the binary one.
"""

from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np

from .corpus import Dataset, Provenance, Report, Stage

SITES = [
    "anterior part of the mandible",
    "posterior part of the mandible",
    "anterior maxilla",
    "posterior maxilla",
    "left mandibular body",
    "right mandibular ramus",
    "right maxillary sinus",
    "left maxillary sinus",
    "symphysis region",
    "premolar region of the mandible",
]

TEETH = [f"# {n}" if n % 3 == 0 else f"#{n}" for n in range(1, 33)]

PREAMBLES = [
    "CBCT image was prepared for the patient based on your order.",
    "Based on CBCT images:",
    "As you see in images:",
    "CBCT of the patient was reviewed.",
    "Axial, coronal and sagittal sections were evaluated.",
]

# {site} and {tooth} are filled per sentence.
LEXICONS: dict[int, list[str]] = {
    1: [
        "There is a mixed lesion with poorly-defined border in {site}.",
        "It caused loss of continuity of the buccal and lingual cortices and alveolar crest.",
        "Based on the possible differential diagnoses (DDX): osteomyelitis in the healing site of the previous surgery.",
        "Infected fibro-osseous lesion is suspected in {site}.",
        "R/O sarcomatosis lesions such as chondrosarcoma.",
        "An expansile radiolucent tumor with cortical perforation is seen in {site}.",
        "Aggressive destructive lesion with ill-defined margins involving {site}.",
        "Findings are suspicious for malignancy; biopsy is recommended urgently.",
        "Moth-eaten bone destruction suggests osteosarcoma in {site}.",
        "Large multilocular lesion suggestive of ameloblastoma displacing tooth {tooth}.",
        "Pathologic fracture through the lesion in {site} is noted.",
        "Periosteal reaction with sunburst pattern is detected.",
    ],
    2: [
        "The tooth {tooth} is in inverted fashion.",
        "The tooth is tightly attached to the buccal and palatal cortices.",
        "Loss of continuity of the palatal cortex is seen near tooth {tooth}.",
        "The blunting in 1/3 middle of the root of tooth {tooth} is detected.",
        "There is association (contact without any cortex) between incisive canal and tooth {tooth}.",
        "Periapical lesion at the apex of tooth {tooth} is seen.",
        "External root resorption of tooth {tooth} is detected.",
        "Impacted tooth {tooth} is in close contact with the mandibular canal.",
        "Deep carious lesion with pulpal involvement in tooth {tooth}.",
        "Furcation involvement and vertical bone loss around tooth {tooth}.",
        "Horizontal root fracture of tooth {tooth} is suspected.",
        "Inadequate root canal filling with periapical radiolucency of tooth {tooth}.",
    ],
    3: [
        "There is a mesiodens (MD) invertedly positioned in the palatal side of the tooth {tooth}.",
        "The MD caused loss of continuity of the palatal cortex.",
        "No root resorption of the adjacent teeth is found.",
        "There is no other supernumerary or missing tooth in the jaws.",
        "Mild mucosal thickening is seen in {site}.",
        "A supernumerary tooth is present adjacent to tooth {tooth} without pathologic change.",
        "Retained deciduous tooth near tooth {tooth} is noted.",
        "Small torus mandibularis is present bilaterally.",
        "Partially erupted third molar tooth {tooth} with adequate space.",
        "Elongated styloid process is observed incidentally.",
        "Minor rotation of tooth {tooth} is seen.",
        "Enamel pearl on the distal root of tooth {tooth} is detected.",
    ],
    4: [
        "No erosive lesion can be detected in {site}.",
        "No erosive lesion can be detected in ant. maxilla.",
        "No pathologic lesion is seen in {site}.",
        "Normal trabecular pattern without any lesion.",
        "The cortices are intact and no resorption is found.",
        "No evidence of periapical pathology around tooth {tooth}.",
        "Alveolar bone level is within normal limits.",
        "The maxillary sinuses are clear without mucosal thickening.",
        "No abnormal finding is detected in the examined region.",
        "Mandibular canal is intact with normal course.",
        "Temporomandibular joints appear normal.",
        "There is no sign of fracture or tumor.",
    ],
}


def _fill(template: str, rng: np.random.Generator) -> str:
    return template.format(
        site=SITES[int(rng.integers(len(SITES)))],
        tooth=TEETH[int(rng.integers(len(TEETH)))],
    )


def _neighbour(severity: int, rng: np.random.Generator) -> int:
    if severity == 1:
        return 2
    if severity == 4:
        return 3
    # 2 and 3 mostly blur with the class they share a stage-2 bucket with
    if rng.random() < 0.75:
        return 1 if severity == 2 else 4
    return 3 if severity == 2 else 2


def generate_synthetic_corpus(
    seed: int,
    counts: Mapping[int, int] | Sequence[int],
    confusion: float = 0.0,
    min_sentences: int = 2,
    max_sentences: int = 4,
    id_prefix: str = "syn",
) -> Dataset:
    """Build a Stage-1 corpus with exactly ``counts[c]`` reports of severity ``c``.

    ``counts`` is either a mapping keyed by severity 1..4 or a 4-sequence in
    severity order. With ``confusion=0`` every finding sentence comes from
    the report's own class lexicon, so the classes are keyword-separable.
    """
    if not isinstance(counts, Mapping):
        counts = {k + 1: int(n) for k, n in enumerate(counts)}
    if any(int(n) < 0 for n in counts.values()):
        raise ValueError("counts must be non-negative")
    if not 0.0 <= confusion <= 1.0:
        raise ValueError("confusion must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    labels = [sev for sev in sorted(counts) for _ in range(int(counts[sev]))]
    rng.shuffle(labels)

    reports = []
    for i, severity in enumerate(labels):
        parts = []
        if rng.random() < 0.5:
            parts.append(PREAMBLES[int(rng.integers(len(PREAMBLES)))])
        n_sent = int(rng.integers(min_sentences, max_sentences + 1))
        for _ in range(n_sent):
            source = _neighbour(severity, rng) if rng.random() < confusion else severity
            lexicon = LEXICONS[source]
            parts.append(_fill(lexicon[int(rng.integers(len(lexicon)))], rng))
        reports.append(Report(f"{id_prefix}{i:05d}", " ".join(parts), int(severity)))
    return Dataset(tuple(reports), Stage.STAGE1, Provenance.SYNTHETIC)


def keyword_separable_corpus(seed: int, per_class: int, stage: Stage = Stage.STAGE1) -> Dataset:
    """Corpus with ``per_class`` reports for every class of ``stage`` and no cross-class sentences."""
    if stage is Stage.STAGE1:
        counts = {k: per_class for k in (1, 2, 3, 4)}
    else:
        # two severities per stage-2 bucket
        half, rest = divmod(per_class, 2)
        counts = {1: half + rest, 2: half, 3: half + rest, 4: half}
    ds = generate_synthetic_corpus(seed, counts, confusion=0.0)
    return ds if stage is Stage.STAGE1 else Dataset(ds.examples, Stage.STAGE2, ds.provenance)
