"""In-context-learning baseline: prompt templates, a chat-completion client, and label parsing."""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import httpx
import numpy as np

from .corpus import Dataset, Stage

log = logging.getLogger(__name__)

DEFAULT_API_KEY_ENV = "TRIAGE_LLM_API_KEY"


class ParseFailure(ValueError):
    """No label valid for the stage could be read from a model response."""

    def __init__(self, response: str):
        super().__init__(f"no valid label in response {response[:80]!r}")
        self.response = response


class TransportFailure(RuntimeError):
    """The chat endpoint could not be reached, or kept failing, within the retry budget."""


class Style(enum.Enum):
    SIMPLE = "simple"
    COMPLICATED = "complicated"

    @classmethod
    def parse(cls, value) -> "Style":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown prompt style {value!r}; expected simple or complicated") from None


# --- template text ---------------------------------------------------------

_SIMPLE_INSTRUCTION = (
    "Assess the magnitude of dental and oral health concerns by analyzing this clinical note. "
    "Provide a numerical label ({choices}), where:"
)

_COMPLICATED_PARAGRAPHS = (
    "We have images related to Cone-beam computed tomography systems (CBCT) and a report is prepared for "
    "each image. Now we want to determine how bad the patient's condition is based on these reports.",
    "For example, when a patient's report is as follows \"CBCT image was prepared for the patient based on "
    "your order. As you see based on the images: There is a mixed lesion with a poorly-defined border in the "
    "anterior part of the mandible. It caused loss of continuity of the buccal and lingual cortices and "
    "alveolar crest. DDX: Osteomyelitis in the healing site of the previous surgery Infected fibro-osseous "
    "lesion R/O Sarcomatosis lesions such as chondrosarcoma\"",
    "Due to the presence of mixed lesion, the patient's condition is not good and he should be treated "
    "immediately In other words, the condition of the patient is emergency.",
    "But when a patient's report is as follows: \"Based on CBCT images: As you see in images no erosive "
    "lesion can be detected in ant. maxilla.\"",
    "This means that the patient is in a good condition and does not need urgent attention because no "
    "erosive lesion has been observed in the patient's report.",
    "According to the above examples, receive the patient's text report as input and provide a numerical "
    "label ({choices}), where:",
)

STAGE2_LEGEND = {0: "urgent", 1: "non-urgent"}
STAGE1_LEGEND = {
    0: "issues require urgent attention",
    1: "treatment can be delayed",
    2: "the problem is not urgent (optional treatment)",
    3: "conditions are entirely normal (no treatment required)",
}

STAGE2_NOTES = {
    0: "This designation is assigned when there is a critical and time-sensitive issue that requires immediate "
       "attention and intervention. Examples of situations warranting a label of \"0\" include significant "
       "complications, potential risks to the patient's health, or conditions that may rapidly worsen if not "
       "addressed promptly.",
    1: "This label is assigned when the observed issues, while noteworthy, do not pose an immediate threat to "
       "the patient's health and can be addressed over time with monitoring or future intervention. It "
       "indicates that the situation does not demand urgent action but may still require attention, "
       "treatment, or follow-up care in the long run.",
}

STAGE1_NOTES = {
    0: "Use this label for aggressive or destructive findings such as suspected tumors, spreading infection "
       "or pathologic fractures, where waiting could harm the patient.",
    1: "Use this label when a real dental problem needs treatment, for example a periapical lesion, root "
       "resorption or an impacted tooth near a vital structure, but the visit can be scheduled.",
    2: "Use this label for incidental or minor findings where treatment is a matter of choice, such as a "
       "supernumerary tooth without pathologic change or a small torus.",
    3: "Use this label when the report describes no abnormal finding at all.",
}


def _choices(n: int) -> str:
    labels = [str(k) for k in range(n)]
    if n == 2:
        return "0 or 1"
    return ", ".join(labels[:-1]) + " or " + labels[-1]


@dataclass(frozen=True)
class PromptTemplate:
    style: Style
    stage: Stage
    instruction: str
    label_legend: Mapping[int, str]
    demonstration_slot_count: int = 0
    legend_notes: Mapping[int, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "style", Style.parse(self.style))
        object.__setattr__(self, "stage", Stage.parse(self.stage))
        legend = dict(self.label_legend)
        if sorted(legend) != list(range(self.stage.n_classes)):
            raise ValueError(f"{self.stage.name} legend must cover classes 0..{self.stage.n_classes - 1}")
        if self.stage is Stage.STAGE2 and legend != STAGE2_LEGEND:
            raise ValueError("the binary legend is fixed to {0: urgent, 1: non-urgent}")
        if self.demonstration_slot_count < 0:
            raise ValueError("demonstration_slot_count must be >= 0")
        if set(self.legend_notes) - set(legend):
            raise ValueError("legend notes reference unknown classes")
        object.__setattr__(self, "label_legend", legend)
        object.__setattr__(self, "legend_notes", dict(self.legend_notes))


def make_template(style, stage, slots: int | None = None) -> PromptTemplate:
    """Stock template; ``slots`` defaults to one demonstration per class (``0`` gives zero-shot)."""
    style = Style.parse(style)
    stage = Stage.parse(stage)
    n = stage.n_classes
    choices = _choices(n)
    if style is Style.SIMPLE:
        instruction = _SIMPLE_INSTRUCTION.format(choices=choices)
        notes = {}
    else:
        instruction = "\n\n".join(p.format(choices=choices) for p in _COMPLICATED_PARAGRAPHS)
        notes = STAGE2_NOTES if stage is Stage.STAGE2 else STAGE1_NOTES
    legend = STAGE2_LEGEND if stage is Stage.STAGE2 else STAGE1_LEGEND
    return PromptTemplate(style, stage, instruction, legend, n if slots is None else slots, notes)


@dataclass(frozen=True)
class Demonstration:
    text: str
    label: int


def build_prompt(template: PromptTemplate, shots: Sequence[Demonstration], query: str) -> str:
    """Instruction, legend, rendered shots, then the open ``note: <query>`` block ending in ``label:``."""
    if len(shots) != template.demonstration_slot_count:
        raise ValueError(f"template has {template.demonstration_slot_count} demonstration slots, got {len(shots)} shots")
    n = template.stage.n_classes
    for shot in shots:
        if not (isinstance(shot.label, (int, np.integer)) and 0 <= shot.label < n):
            raise ValueError(f"demonstration label {shot.label!r} is not valid for {template.stage.name}")
    legend = []
    for k in sorted(template.label_legend):
        line = f"{k}: {template.label_legend[k]}"
        if k in template.legend_notes:
            line += " " + template.legend_notes[k]
        legend.append(line)
    blocks = [template.instruction, "\n".join(legend)]
    blocks += [f"note: {s.text}\nlabel: {int(s.label)}" for s in shots]
    blocks.append(f"note: {query}\nlabel:")
    return "\n\n".join(blocks)


def select_demonstrations(train: Dataset, seed: int) -> list[Demonstration]:
    """One seeded demonstration per class, in class order."""
    labels = train.labels()
    rng = np.random.default_rng(seed)
    shots = []
    for c in range(train.n_classes):
        members = np.flatnonzero(labels == c)
        if len(members) == 0:
            raise ValueError(f"class {c} has no example to demonstrate")
        i = int(rng.choice(members))
        shots.append(Demonstration(train.examples[i].text, c))
    return shots


_INT_RE = re.compile(r"(?<![\w.\-])(\d+)(?!\w|\.\d)")


def parse_label(response_text: str, stage) -> int:
    """First standalone integer in the response that names a class of ``stage``."""
    n = Stage.parse(stage).n_classes
    text = response_text if isinstance(response_text, str) else str(response_text)
    for m in _INT_RE.finditer(text):
        value = int(m.group(1))
        if value < n:
            return value
    raise ParseFailure(text)


# --- client ----------------------------------------------------------------

@dataclass(frozen=True)
class ChatClientConfig:
    endpoint: str
    model_name: str
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 3
    api_key_env: str = DEFAULT_API_KEY_ENV
    auth_header: str = "Authorization"
    auth_prefix: str = "Bearer "
    requires_key: bool = True
    backoff_base: float = 1.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")

    def headers(self) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            if self.requires_key:
                raise TransportFailure(f"API key not found in environment variable {self.api_key_env}")
            return {}
        return {self.auth_header: f"{self.auth_prefix}{key}"}


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is available."""

    def __init__(self, rate: float, capacity: float | None = None,
                 clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        if rate <= 0:
            raise ValueError("rate must be > 0")
        self.rate = float(rate)
        self.capacity = float(capacity if capacity is not None else max(1.0, rate))
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self):
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class ChatClient:
    """Sends one user message per request and returns the first choice's content."""

    def __init__(self, config: ChatClientConfig, transport: httpx.BaseTransport | None = None,
                 sleep: Callable[[float], None] = time.sleep, limiter: TokenBucket | None = None):
        self.config = config
        self._sleep = sleep
        self._limiter = limiter
        self._http = httpx.Client(timeout=config.timeout, transport=transport)

    def close(self):
        self._http.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def request_body(self, prompt: str) -> dict:
        return {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }

    def complete(self, prompt: str) -> str:
        cfg = self.config
        headers = cfg.headers()
        body = self.request_body(prompt)
        digest = hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:12]
        last = "no attempt made"
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self._sleep(cfg.backoff_base * 2 ** (attempt - 1))
            if self._limiter is not None:
                self._limiter.acquire()
            start = time.perf_counter()
            try:
                resp = self._http.post(cfg.endpoint, json=body, headers=headers)
            except httpx.TransportError as exc:
                last = f"{type(exc).__name__}: {exc}"
                log.info("chat prompt=%s attempt=%d latency_ms=%.1f outcome=transport-error %s",
                         digest, attempt + 1, 1000 * (time.perf_counter() - start), last)
                continue
            latency = 1000 * (time.perf_counter() - start)
            if resp.status_code == 429 or resp.status_code >= 500:
                last = f"HTTP {resp.status_code}"
                log.info("chat prompt=%s attempt=%d latency_ms=%.1f outcome=retryable %s",
                         digest, attempt + 1, latency, last)
                continue
            if resp.status_code != 200:
                log.info("chat prompt=%s attempt=%d latency_ms=%.1f outcome=HTTP %d",
                         digest, attempt + 1, latency, resp.status_code)
                raise TransportFailure(f"chat endpoint returned HTTP {resp.status_code}")
            try:
                content = resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError):
                log.info("chat prompt=%s attempt=%d latency_ms=%.1f outcome=malformed", digest, attempt + 1, latency)
                raise TransportFailure("chat response does not have the chat-completion shape") from None
            log.info("chat prompt=%s attempt=%d latency_ms=%.1f outcome=ok response=%r",
                     digest, attempt + 1, latency, str(content)[:60])
            return str(content)
        raise TransportFailure(f"chat endpoint failed {cfg.max_retries + 1} times; last error: {last}")


def classify_with_llm(config: ChatClientConfig, template: PromptTemplate, shots: Sequence[Demonstration],
                      text: str, transport: httpx.BaseTransport | None = None,
                      sleep: Callable[[float], None] = time.sleep,
                      client: ChatClient | None = None) -> int | ParseFailure:
    """Prompt, query and parse; a response without a valid label comes back as a ``ParseFailure`` value."""
    prompt = build_prompt(template, shots, text)
    own = client is None
    client = client or ChatClient(config, transport=transport, sleep=sleep)
    try:
        response = client.complete(prompt)
    finally:
        if own:
            client.close()
    try:
        return parse_label(response, template.stage)
    except ParseFailure as failure:
        return failure


def classify_many(config: ChatClientConfig, template: PromptTemplate, shots: Sequence[Demonstration],
                  texts: Sequence[str], max_in_flight: int = 4, rate_per_second: float | None = None,
                  transport: httpx.BaseTransport | None = None,
                  sleep: Callable[[float], None] = time.sleep) -> list[int | ParseFailure]:
    """Classify ``texts`` with at most ``max_in_flight`` concurrent requests; results keep input order."""
    if max_in_flight < 1:
        raise ValueError("max_in_flight must be >= 1")
    limiter = TokenBucket(rate_per_second, sleep=sleep) if rate_per_second else None
    with ChatClient(config, transport=transport, sleep=sleep, limiter=limiter) as client:
        def one(text):
            return classify_with_llm(config, template, shots, text, client=client)

        if max_in_flight == 1:
            return [one(t) for t in texts]
        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(one, texts))


# --- offline responder -----------------------------------------------------

KEYWORD_CUES = {
    1: ("tumor", "malignan", "sarcoma", "osteomyelitis", "aggressive", "destructive", "biopsy",
        "mixed lesion", "ameloblastoma", "periosteal", "pathologic fracture"),
    2: ("periapical lesion", "root resorption of tooth", "impacted", "carious", "furcation",
        "root fracture", "inverted fashion", "blunting", "root canal", "contact without"),
    3: ("mesiodens", "supernumerary", "torus", "retained deciduous", "styloid", "rotation",
        "enamel pearl", "mucosal thickening is seen", "partially erupted"),
    4: ("no erosive", "no pathologic", "normal", "intact", "are clear", "no evidence", "no abnormal"),
}

_QUERY_RE = re.compile(r"note: (.*)\nlabel:\Z", re.S)


def keyword_severity(text: str) -> int | None:
    """Severity 1..4 with the most cue hits (lowest severity wins ties), or ``None`` without any hit."""
    low = text.lower()
    scores = {sev: sum(low.count(cue) for cue in cues) for sev, cues in KEYWORD_CUES.items()}
    best = max(scores.values())
    if best == 0:
        return None
    return min(sev for sev, s in scores.items() if s == best)


def keyword_responder(stage) -> Callable[[httpx.Request], httpx.Response]:
    """Deterministic stand-in for a chat endpoint that labels the prompt's query note by keyword cues."""
    stage = Stage.parse(stage)

    def handler(request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        prompt = body["messages"][-1]["content"]
        tail = prompt.rsplit("\n\nnote: ", 1)[-1]
        m = _QUERY_RE.search("note: " + tail)
        severity = keyword_severity(m.group(1)) if m else None
        if severity is None:
            answer = "I cannot determine this."
        else:
            label = severity - 1 if stage is Stage.STAGE1 else (0 if severity <= 2 else 1)
            answer = f"label: {label}"
        return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": answer}}]})

    return handler


def keyword_mock_transport(stage) -> httpx.MockTransport:
    return httpx.MockTransport(keyword_responder(stage))
