"""Command-line interface: prepare, benchmark, train, predict, llm-eval, report (plus synth)."""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import io
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__, classifiers, fewshot, llm_icl
from .corpus import (
    CorpusError,
    Dataset,
    Stage,
    class_description,
    class_distribution,
    load_corpus,
    random_oversample,
    save_corpus,
    stratified_split,
    with_stage,
)
from .eval import (
    Balancing,
    BenchmarkGrid,
    LlmSettings,
    cells_from_document,
    compute_metrics,
    confusion_matrix,
    derive_seed,
    emit_report,
    run_benchmark,
    write_reports,
)
from .features import Vocabulary, build_vocabulary, preprocess_texts, tfidf_vector, to_dense
from .preprocess import Lexicon, PipelineConfig, default_lexicon
from .synthetic import generate_synthetic_corpus

log = logging.getLogger("dentriage")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_RUNTIME = 0, 1, 2, 3
BUNDLE_FORMAT = "dentriage.bundle"


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


# --- run configuration -----------------------------------------------------

def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt(cast):
    def parse(text):
        if text is None or str(text).strip().lower() in ("", "none"):
            return None
        return cast(text)
    return parse


def _list(text) -> list[str]:
    if isinstance(text, (list, tuple)):
        return [str(t) for t in text]
    return [t.strip() for t in str(text).split(",") if t.strip()]


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple[Callable, Any]]] = {
    "run": {"seed": (int, 0), "out": (str, "results")},
    "corpus": {"path": (_opt(str), None), "format": (_opt(str), None)},
    "pipeline": {
        "stopwords": (_bool, True),
        "lemmatize": (_bool, True),
        "spellcheck": (_bool, True),
        "max_edit_distance": (int, 2),
        "stopwords_file": (_opt(str), None),
        "lemmas_file": (_opt(str), None),
        "vocabulary_file": (_opt(str), None),
    },
    "benchmark": {
        "stages": (_list, ["1", "2"]),
        "balancings": (_list, ["imbalanced", "balanced"]),
        "classifiers": (_list, list(classifiers.DISPLAY_NAMES)),
        "fsbm": (_bool, True),
        "train_fraction": (float, 0.8),
        "min_df": (int, 1),
        "workers": (int, 1),
    },
    "fsbm": {
        "per_class": (int, 200),
        "pairs_per_anchor": (int, 20),
        "epochs": (int, 10),
        "lr": (float, 0.01),
        "head_dim_out": (_opt(int), None),
        "batch_size": (int, 16),
    },
    "embedding": {
        "kind": (str, "hashed"),
        "dim": (int, 256),
        "seed": (int, 0),
        "endpoint": (_opt(str), None),
    },
    "llm": {
        "enabled": (_bool, False),
        "mock": (_bool, False),
        "endpoint": (str, "https://api.openai.com/v1/chat/completions"),
        "model": (str, "gpt-3.5-turbo"),
        "temperature": (float, 0.0),
        "timeout": (float, 60.0),
        "max_retries": (int, 3),
        "api_key_env": (str, llm_icl.DEFAULT_API_KEY_ENV),
        "auth_header": (str, "Authorization"),
        "styles": (_list, ["simple", "complicated"]),
        "few_shot": (_bool, True),
        "max_in_flight": (int, 4),
        "rate_per_second": (_opt(float), None),
    },
}


def _render(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(value)
    return repr(value) if isinstance(value, float) else str(value)


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {s: {k: d for k, (_, d) in keys.items()}
                                                  for s, keys in SCHEMA.items()})

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, raw):
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise UsageError(f"unknown config key [{section}] {key}")
        parser = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parser(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for [{section}] {key}: {exc}") from None

    @classmethod
    def from_ini(cls, text: str, source: str = "<config>") -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_string(text, source=source)
        except configparser.Error as exc:
            raise UsageError(f"cannot parse config {source}: {exc}") from None
        cfg = cls()
        for section in parser.sections():
            if section not in SCHEMA:
                raise UsageError(f"unknown config section [{section}] in {source}")
            for key, raw in parser.items(section):
                cfg.set(section, key, raw)
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc.strerror}") from None
        return cls.from_ini(text, str(path))

    def to_ini(self) -> str:
        parser = configparser.ConfigParser(interpolation=None)
        for section, keys in self.values.items():
            parser[section] = {k: _render(v) for k, v in keys.items()}
        buf = io.StringIO()
        parser.write(buf)
        return buf.getvalue()

    # typed views

    def pipeline(self) -> PipelineConfig:
        p = self.values["pipeline"]
        return PipelineConfig(p["stopwords"], p["lemmatize"], p["spellcheck"], p["max_edit_distance"])

    def lexicon(self) -> Lexicon:
        p = self.values["pipeline"]
        if not (p["stopwords_file"] or p["lemmas_file"] or p["vocabulary_file"]):
            return default_lexicon()
        lex = Lexicon.from_files(p["stopwords_file"], p["lemmas_file"], p["vocabulary_file"])
        if not p["vocabulary_file"]:
            lex = Lexicon(lex.stopwords, dict(lex.lemma_map), dict(default_lexicon().vocabulary))
        return lex

    def fsbm(self) -> fewshot.FsbmConfig:
        f = self.values["fsbm"]
        return fewshot.FsbmConfig(f["per_class"], f["pairs_per_anchor"], f["epochs"], f["lr"],
                                  f["head_dim_out"], f["batch_size"])

    def embedding(self) -> dict:
        e = self.values["embedding"]
        if e["kind"] == "remote":
            if not e["endpoint"]:
                raise UsageError("[embedding] kind = remote needs an endpoint")
            return {"kind": "remote", "endpoint": e["endpoint"], "dim": e["dim"]}
        if e["kind"] != "hashed":
            raise UsageError(f"unknown embedding kind {e['kind']!r}")
        return {"kind": "hashed", "dim": e["dim"], "seed": e["seed"]}

    def chat(self) -> llm_icl.ChatClientConfig:
        m = self.values["llm"]
        return llm_icl.ChatClientConfig(
            endpoint=m["endpoint"], model_name=m["model"], temperature=m["temperature"], timeout=m["timeout"],
            max_retries=m["max_retries"], api_key_env=m["api_key_env"], auth_header=m["auth_header"],
            requires_key=not m["mock"],
        )

    def llm_settings(self) -> LlmSettings:
        m = self.values["llm"]
        return LlmSettings(
            self.chat(), tuple(llm_icl.Style.parse(s) for s in m["styles"]), m["few_shot"],
            m["max_in_flight"], m["rate_per_second"],
            llm_icl.keyword_mock_transport if m["mock"] else None,
        )

    def grid(self) -> BenchmarkGrid:
        b = self.values["benchmark"]
        keys = {k.lower(): k for k in classifiers.DISPLAY_NAMES}
        keys.update({v.lower(): k for k, v in classifiers.DISPLAY_NAMES.items()})
        specs = []
        for name in b["classifiers"]:
            if name.lower() not in keys:
                raise UsageError(f"unknown classifier {name!r}")
            specs.append(classifiers.ClassifierSpec(keys[name.lower()]))
        return BenchmarkGrid(
            stages=tuple(Stage.parse(s) for s in b["stages"]),
            balancings=tuple(Balancing.parse(x) for x in b["balancings"]),
            classifiers=tuple(specs),
            fsbm=self.fsbm() if b["fsbm"] else None,
            embedding=self.embedding(),
            llm=self.llm_settings() if self.values["llm"]["enabled"] else None,
            pipeline=self.pipeline(),
            lexicon=self.lexicon(),
            train_fraction=b["train_fraction"],
            min_df=b["min_df"],
        )


# --- argument parsing ------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _global_flags(parser: argparse.ArgumentParser, suppress: bool):
    default = argparse.SUPPRESS if suppress else None
    parser.add_argument("--seed", type=int, default=default, help="base random seed")
    parser.add_argument("--config", default=default, help="INI run configuration")
    parser.add_argument("--out", default=default, help="output directory")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def _corpus_flags(p):
    p.add_argument("--corpus", help="CSV or JSONL corpus with id,text,label")
    p.add_argument("--format", choices=["csv", "jsonl"], help="corpus format (default: from extension)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dentriage", description="Severity triage of dental radiology reports.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    def command(name, help_text):
        p = sub.add_parser(name, help=help_text, description=help_text)
        _global_flags(p, suppress=True)
        return p

    p = command("prepare", "load a corpus, print class distributions and write split manifests")
    _corpus_flags(p)
    p.add_argument("--stage", type=int, choices=[1, 2], help="only this stage (default: both)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_prepare)

    p = command("benchmark", "run the classifier grid and write result tables")
    _corpus_flags(p)
    p.add_argument("--stage", type=int, choices=[1, 2], action="append", help="restrict to a stage (repeatable)")
    llm = p.add_mutually_exclusive_group()
    llm.add_argument("--llm", dest="llm", action="store_true", default=None, help="include LLM prompt cells")
    llm.add_argument("--no-llm", dest="llm", action="store_false", help="skip LLM cells (default)")
    p.add_argument("--llm-mock", action="store_true", help="answer LLM prompts with the offline keyword responder")
    p.add_argument("--only", help="comma-separated model names to run, e.g. fsbm or MultinomialNB,LinearSVM")
    p.add_argument("--workers", type=int, help="cells run in parallel per table")
    p.set_defaults(func=cmd_benchmark)

    p = command("train", "fit one model on a corpus and save it as a JSON bundle")
    _corpus_flags(p)
    p.add_argument("--algorithm", required=True, choices=list(classifiers.ALGORITHMS) + ["FSBM"])
    p.add_argument("--stage", type=int, choices=[1, 2], default=1)
    p.add_argument("--balanced", action="store_true", help="oversample minority classes before fitting")
    p.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="hyperparameter override")
    p.add_argument("--model-out", help="bundle path (default: OUT/model.json)")
    p.set_defaults(func=cmd_train)

    p = command("predict", "classify report text with a saved model bundle")
    p.add_argument("--model", required=True, help="bundle written by 'train'")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--text", help="a single report")
    src.add_argument("--file", help="file with one report per line")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.set_defaults(func=cmd_predict)

    p = command("llm-eval", "score prompt-based classification on the test split")
    _corpus_flags(p)
    p.add_argument("--stage", type=int, choices=[1, 2], default=2)
    p.add_argument("--style", choices=["simple", "complicated", "both"], default="both")
    p.add_argument("--zero-shot", action="store_true", help="no demonstrations in the prompt")
    p.add_argument("--mock", action="store_true", help="use the offline keyword responder instead of an endpoint")
    p.add_argument("--endpoint", help="chat-completion URL")
    p.add_argument("--model-name", help="model requested from the endpoint")
    p.add_argument("--limit", type=int, help="score only the first N test reports")
    p.set_defaults(func=cmd_llm_eval)

    p = command("report", "render result tables from a benchmark.json")
    p.add_argument("--input", help="benchmark.json (default: OUT/benchmark.json)")
    p.add_argument("--format", choices=["markdown", "csv"], default="markdown")
    p.set_defaults(func=cmd_report)

    p = command("synth", "write a deterministic synthetic corpus")
    p.add_argument("--counts", default="67,354,219,64", help="reports per severity 1..4")
    p.add_argument("--confusion", type=float, default=0.3, help="share of sentences borrowed from a neighbour class")
    p.add_argument("--output", required=True, help="CSV or JSONL path")
    p.set_defaults(func=cmd_synth)
    return parser


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then command-line flags."""
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg.set("run", "seed", args.seed)
    if getattr(args, "out", None) is not None:
        cfg.set("run", "out", args.out)
    if getattr(args, "corpus", None):
        cfg.set("corpus", "path", args.corpus)
    if getattr(args, "format", None) and args.command != "report":
        cfg.set("corpus", "format", args.format)
    return cfg


def _load(cfg: RunConfig) -> Dataset:
    path = cfg.get("corpus", "path")
    if not path:
        raise UsageError("no corpus given (use --corpus or [corpus] path)")
    return load_corpus(path, cfg.get("corpus", "format"))


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.get("run", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# --- commands --------------------------------------------------------------

def cmd_prepare(args, cfg: RunConfig) -> int:
    data = _load(cfg)
    seed = cfg.get("run", "seed")
    stages = [Stage.parse(args.stage)] if args.stage else [Stage.STAGE1, Stage.STAGE2]
    out = _out_dir(cfg)
    summary = {"n_reports": len(data), "stages": {}}
    lines = []
    for stage in stages:
        staged = with_stage(data, stage)
        train, test = stratified_split(staged, cfg.get("benchmark", "train_fraction"),
                                       derive_seed(seed, "split", stage))
        balanced = random_oversample(train, derive_seed(seed, "oversample", stage))
        dist = class_distribution(staged)
        summary["stages"][str(stage.value)] = {
            "distribution": {str(k): v for k, v in dist.items()},
            "train": {str(k): v for k, v in class_distribution(train).items()},
            "test": {str(k): v for k, v in class_distribution(test).items()},
            "train_balanced": {str(k): v for k, v in class_distribution(balanced).items()},
        }
        lines.append(f"Stage {stage.value} class distribution ({len(staged)} reports)")
        for k, n in dist.items():
            label = k + 1 if stage is Stage.STAGE1 else k
            lines.append(f"  {label}  {class_description(k, stage):<56} {n:>5}")
        lines.append("  train split:         " + " ".join(str(v) for v in class_distribution(train).values()))
        lines.append("  test split:          " + " ".join(str(v) for v in class_distribution(test).values()))
        lines.append("  train (oversampled): " + " ".join(str(v) for v in class_distribution(balanced).values()))
        for name, part in (("train", train), ("test", test)):
            path = out / f"split_stage{stage.value}_{name}.txt"
            path.write_text("\n".join(part.ids) + "\n", encoding="utf-8")
    _write_json(out / "prepare.json", summary)
    print(json.dumps(summary, indent=2, sort_keys=True) if args.json else "\n".join(lines))
    return EXIT_OK


def cmd_benchmark(args, cfg: RunConfig) -> int:
    if args.stage:
        cfg.set("benchmark", "stages", [str(s) for s in dict.fromkeys(args.stage)])
    if args.llm is not None:
        cfg.set("llm", "enabled", args.llm)
    if args.llm_mock:
        cfg.set("llm", "mock", True)
    if args.workers:
        cfg.set("benchmark", "workers", args.workers)
    data = _load(cfg)
    grid = cfg.grid()
    if args.only:
        try:
            grid = grid.only(_list(args.only))
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    seed = cfg.get("run", "seed")
    print(f"running {grid.n_cells} cells: {len(grid.stages)} stage(s) x {len(grid.balancings)} balancing(s) "
          f"x {len(grid.model_names())} model(s)")
    cells = run_benchmark(data, grid, seed, workers=cfg.get("benchmark", "workers"))
    out = _out_dir(cfg)
    write_reports(cells, out, grid, seed, data)
    (out / "run_config.ini").write_text(cfg.to_ini(), encoding="utf-8")
    failed = [c for c in cells if not c.ok]
    for c in failed:
        print(f"cell failed: stage {c.stage.value} {c.balancing.value} {c.classifier_name}: {c.error}",
              file=sys.stderr)
    print(emit_report(cells, "markdown"))
    print(f"{len(cells) - len(failed)}/{len(cells)} cells succeeded; reports in {out}")
    if cells and len(failed) == len(cells):
        return EXIT_RUNTIME
    return EXIT_OK


def _parse_params(items: Sequence[str]) -> dict:
    params = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--param expects KEY=VALUE, got {item!r}")
        try:
            params[key.strip()] = json.loads(raw)
        except json.JSONDecodeError:
            params[key.strip()] = raw
    return params


def _lexicon_dict(lex: Lexicon) -> dict:
    return {"stopwords": sorted(lex.stopwords), "lemma_map": dict(sorted(lex.lemma_map.items())),
            "vocabulary": dict(sorted(lex.vocabulary.items()))}


def cmd_train(args, cfg: RunConfig) -> int:
    data = with_stage(_load(cfg), Stage.parse(args.stage))
    seed = cfg.get("run", "seed")
    if args.balanced:
        data = random_oversample(data, derive_seed(seed, "oversample", data.stage))
    params = _parse_params(args.param)
    pipeline, lexicon = cfg.pipeline(), cfg.lexicon()
    bundle = {"format": BUNDLE_FORMAT, "version": 1, "stage": data.stage.value, "algorithm": args.algorithm}
    if args.algorithm == "FSBM":
        fs = dataclasses.replace(cfg.fsbm(), mlp_hyperparams=params)
        provider = fewshot.provider_from_config(cfg.embedding())
        model = fewshot.fsbm_fit(data, provider, fs, seed)
        bundle["model"] = model.to_dict()
    else:
        try:
            spec = classifiers.ClassifierSpec(args.algorithm, params, seed)
        except (TypeError, ValueError) as exc:
            raise UsageError(str(exc)) from None
        docs = preprocess_texts(data.texts, pipeline, lexicon)
        vocab = build_vocabulary(docs, cfg.get("benchmark", "min_df"))
        X = to_dense([tfidf_vector(d, vocab) for d in docs], len(vocab))
        model = classifiers.fit(spec, X, data.labels(), data.n_classes)
        bundle.update({
            "pipeline": dataclasses.asdict(pipeline),
            "lexicon": _lexicon_dict(lexicon),
            "vocabulary": vocab.to_dict(),
            "model": classifiers.model_to_dict(model),
        })
    path = Path(args.model_out) if args.model_out else _out_dir(cfg) / "model.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    _write_json(path, bundle)
    print(f"trained {args.algorithm} on {len(data)} reports (stage {data.stage.value}); bundle written to {path}")
    return EXIT_OK


class _Predictor:
    def __init__(self, bundle: dict):
        if not isinstance(bundle, dict) or bundle.get("format") != BUNDLE_FORMAT:
            raise DataError("not a dentriage model bundle")
        try:
            self.stage = Stage.parse(bundle["stage"])
            if bundle["algorithm"] == "FSBM":
                self.fsbm = fewshot.FsbmModel.from_dict(bundle["model"])
                self.model = None
            else:
                self.fsbm = None
                self.pipeline = PipelineConfig(**bundle["pipeline"])
                lex = bundle["lexicon"]
                self.lexicon = Lexicon(frozenset(lex["stopwords"]), lex["lemma_map"], lex["vocabulary"])
                self.vocab = Vocabulary.from_dict(bundle["vocabulary"])
                self.model = classifiers.model_from_dict(bundle["model"])
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"corrupted model bundle: {exc}") from None
        n = self.fsbm.classifier.n_features if self.fsbm else len(self.vocab)
        expected = self.fsbm.head.dim_out if self.fsbm else self.model.n_features
        if n != expected:
            raise DataError(f"model expects {expected} features but the bundle provides {n}")

    def proba(self, texts: Sequence[str]) -> np.ndarray:
        if self.fsbm is not None:
            return fewshot.fsbm_predict_proba(self.fsbm, texts)
        docs = preprocess_texts(texts, self.pipeline, self.lexicon)
        X = to_dense([tfidf_vector(d, self.vocab) for d in docs], len(self.vocab))
        return classifiers.predict_proba(self.model, X)


def cmd_predict(args, cfg: RunConfig) -> int:
    try:
        bundle = json.loads(Path(args.model).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read model {args.model}: {exc.strerror}") from None
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"corrupted model file {args.model}: {exc}") from None
    predictor = _Predictor(bundle)
    if args.text is not None:
        texts = [args.text]
    else:
        try:
            texts = [t for t in Path(args.file).read_text(encoding="utf-8").splitlines() if t.strip()]
        except OSError as exc:
            raise DataError(f"cannot read {args.file}: {exc.strerror}") from None
    P = predictor.proba(texts)
    results = []
    for text, p in zip(texts, P):
        k = int(np.argmax(p))
        results.append({"class": k, "description": class_description(k, predictor.stage),
                        "probabilities": [round(float(v), 6) for v in p], "text": text})
    if args.json:
        print(json.dumps(results if len(results) != 1 else results[0], indent=2))
    else:
        for r in results:
            probs = " ".join(f"{v:.3f}" for v in r["probabilities"])
            print(f"{r['class']}\t{r['description']}\t[{probs}]")
    return EXIT_OK


def cmd_llm_eval(args, cfg: RunConfig) -> int:
    if args.mock:
        cfg.set("llm", "mock", True)
    if args.endpoint:
        cfg.set("llm", "endpoint", args.endpoint)
    if args.model_name:
        cfg.set("llm", "model", args.model_name)
    stage = Stage.parse(args.stage)
    seed = cfg.get("run", "seed")
    data = with_stage(_load(cfg), stage)
    train, test = stratified_split(data, cfg.get("benchmark", "train_fraction"), derive_seed(seed, "split", stage))
    if args.limit is not None:
        test = test.subset(range(min(args.limit, len(test))))
    styles = ["simple", "complicated"] if args.style == "both" else [args.style]
    chat = cfg.chat()
    transport = llm_icl.keyword_mock_transport(stage) if cfg.get("llm", "mock") else None
    out = _out_dir(cfg)
    summary = {"stage": stage.value, "seed": seed, "n_test": len(test), "few_shot": not args.zero_shot,
               "model": chat.model_name, "results": {}}
    for style in styles:
        shots = [] if args.zero_shot else llm_icl.select_demonstrations(train, derive_seed(seed, "shots", stage, style))
        template = llm_icl.make_template(style, stage, len(shots))
        preds = llm_icl.classify_many(chat, template, shots, test.texts, cfg.get("llm", "max_in_flight"),
                                      cfg.get("llm", "rate_per_second"), transport)
        cm = confusion_matrix(list(test.labels()), preds, stage.n_classes)
        metrics = compute_metrics(cm)
        failures = sum(1 for p in preds if isinstance(p, llm_icl.ParseFailure))
        with open(out / f"llm_predictions_{style}.jsonl", "w", encoding="utf-8") as fh:
            for r, y, p in zip(test.examples, test.labels(), preds):
                row = {"id": r.id, "true": int(y), "pred": None if isinstance(p, llm_icl.ParseFailure) else int(p)}
                if isinstance(p, llm_icl.ParseFailure):
                    row["parse_failure"] = p.response
                fh.write(json.dumps(row, sort_keys=True) + "\n")
        summary["results"][style] = {"metrics": metrics.to_dict(), "confusion": cm.tolist(),
                                     "parse_failures": failures}
        acc, prec, rec, f1 = metrics.rounded(3)
        print(f"{style:<12} accuracy {acc}  precision {prec}  recall {rec}  F-measure {f1}  "
              f"parse failures {failures}/{len(test)}")
    _write_json(out / "llm_eval.json", summary)
    return EXIT_OK


def cmd_report(args, cfg: RunConfig) -> int:
    path = Path(args.input) if args.input else Path(cfg.get("run", "out")) / "benchmark.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
        cells = cells_from_document(doc)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed benchmark file {path}: {exc}") from None
    sys.stdout.write(emit_report(cells, args.format))
    return EXIT_OK


def cmd_synth(args, cfg: RunConfig) -> int:
    try:
        counts = [int(c) for c in args.counts.split(",")]
    except ValueError:
        raise UsageError(f"--counts expects four integers, got {args.counts!r}") from None
    if len(counts) != 4:
        raise UsageError("--counts expects four integers (severities 1..4)")
    data = generate_synthetic_corpus(cfg.get("run", "seed"), counts, confusion=args.confusion)
    save_corpus(data, args.output)
    print(f"wrote {len(data)} synthetic reports to {args.output}")
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING - 10 * min(getattr(args, "verbose", 0) or 0, 2),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except UsageError as exc:
        print(f"dentriage: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CorpusError, FileNotFoundError, UnicodeDecodeError) as exc:
        print(f"dentriage: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"dentriage: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # transport failures and other runtime faults
        print(f"dentriage: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
