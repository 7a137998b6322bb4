"""Run configuration and the train / tag / eval / sweep pipelines.

Configuration files are flat ``key = value`` text; ``#`` starts a comment.
Every key of :class:`RunConfig` may appear, and the command line front end
lets a same-named flag override any of them.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import os
import time
from dataclasses import dataclass, field, fields
from typing import Iterable

import numpy as np

from . import crfae, hmm, metrics
from .corpus import Corpus, apply_tag_map, load_tag_map, read_corpus, read_label_file
from .crfae import TEMPLATES, CRFAutoencoder
from .embeddings import embed_corpus, read_embeddings
from .exceptions import ConfigError, DataError, PosInduceError
from .hmm import GaussianHMM, MultinomialHMM
from .persistence import load_model, save_model

MODELS = ("hmm-multinomial", "hmm-gaussian", "crfae-gaussian", "crfae-multinomial")
GAUSSIAN_MODELS = ("hmm-gaussian", "crfae-gaussian")


@dataclass
class RunConfig:
    model: str = "hmm-gaussian"
    corpus: str | None = None
    corpus_format: str = "conll"
    token_column: int = 0
    tag_column: int | None = None
    tag_map: str | None = None
    embeddings: str | None = None
    embeddings_format: str = "auto"
    reconstruction_labels: str | None = None
    lowercase: bool = False
    num_tags: int | None = None
    covariance_mode: str = "fixed"
    fixed_variance: float = 0.45
    variance_floor: float = 1e-4
    max_iterations: int = 100
    tolerance: float = 1e-5
    n_init: int = 1
    inner_steps: int = 5
    step_size: float = 0.1
    l2: float = 0.0
    templates: str = "all"
    rng_seed: int = 0
    decode_mode: str = "viterbi"
    output: str = "run"

    def validate(self, need_paths=True) -> "RunConfig":
        def bad(msg):
            raise ConfigError(msg)

        if self.model not in MODELS:
            bad(f"model must be one of {', '.join(MODELS)}")
        if self.corpus_format not in ("conll", "plain"):
            bad("corpus_format must be conll or plain")
        if self.embeddings_format not in ("auto", "text", "binary"):
            bad("embeddings_format must be auto, text or binary")
        if self.covariance_mode not in hmm.COVARIANCE_MODES:
            bad("covariance_mode must be fixed or estimated")
        if self.decode_mode not in hmm.DECODE_MODES:
            bad("decode_mode must be viterbi or posterior")
        if self.num_tags is not None and self.num_tags < 2:
            bad("num_tags must be at least 2")
        if self.fixed_variance <= 0 or self.variance_floor <= 0:
            bad("variances must be positive")
        if self.max_iterations < 0 or self.tolerance < 0 or self.n_init < 1:
            bad("max_iterations and tolerance must be >= 0 and n_init >= 1")
        if self.inner_steps < 0 or self.step_size <= 0 or self.l2 < 0:
            bad("inner_steps and l2 must be >= 0 and step_size > 0")
        if self.token_column < 0 or (self.tag_column is not None and self.tag_column < 0):
            bad("column indices must be non-negative")
        self.template_list()
        if not need_paths:
            return self
        if not self.corpus:
            bad("corpus is required")
        required = [("corpus", self.corpus)]
        if self.model in GAUSSIAN_MODELS:
            if not self.embeddings:
                bad(f"model {self.model} requires embeddings")
            required.append(("embeddings", self.embeddings))
        if self.model == "crfae-multinomial":
            if not self.reconstruction_labels:
                bad("model crfae-multinomial requires reconstruction_labels")
            required.append(("reconstruction_labels", self.reconstruction_labels))
        if self.tag_map:
            required.append(("tag_map", self.tag_map))
        for key, path in required:
            if not os.path.exists(path):
                bad(f"{key} path does not exist: {path}")
        return self

    def template_list(self) -> tuple[str, ...]:
        if self.templates in ("all", "", None):
            return TEMPLATES
        names = tuple(t.strip() for t in self.templates.split(",") if t.strip())
        unknown = [t for t in names if t not in TEMPLATES]
        if unknown:
            raise ConfigError(f"unknown feature templates: {', '.join(unknown)}")
        return names

    def dumps(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if v is None:
                v = ""
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


_FIELD_TYPES = {
    "model": str, "corpus": str, "corpus_format": str, "token_column": int, "tag_column": int,
    "tag_map": str, "embeddings": str, "embeddings_format": str, "reconstruction_labels": str,
    "lowercase": bool, "num_tags": int, "covariance_mode": str, "fixed_variance": float,
    "variance_floor": float, "max_iterations": int, "tolerance": float, "n_init": int,
    "inner_steps": int, "step_size": float, "l2": float, "templates": str, "rng_seed": int,
    "decode_mode": str, "output": str,
}
assert set(_FIELD_TYPES) == {f.name for f in fields(RunConfig)}


def coerce(key: str, raw):
    """Convert a textual config value to the type of field ``key``."""
    if key not in _FIELD_TYPES:
        raise ConfigError(f"unknown configuration key {key!r}")
    kind = _FIELD_TYPES[key]
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if raw == "" or raw.lower() == "none":
        return None
    try:
        if kind is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def parse_key_values(lines: Iterable[str], multi: tuple[str, ...] = ()) -> dict:
    out: dict = {k: [] for k in multi}
    for lineno, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {lineno}: expected 'key = value'")
        key, value = (x.strip() for x in line.split("=", 1))
        if key in multi:
            out[key].append(value)
        else:
            out[key] = value
    return out


def build_config(file_values: dict, overrides: dict) -> RunConfig:
    """Merge config-file values with flag overrides (flags win)."""
    values = {}
    for source in (file_values, overrides):
        for k, v in source.items():
            if v is None:
                continue
            value = coerce(k, v)
            if value is None:
                values.pop(k, None)
            else:
                values[k] = value
    return RunConfig(**values)


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_key_values(fh)


# -- data loading -------------------------------------------------------------


@dataclass
class Dataset:
    corpus: Corpus
    vectors: list | None = None
    labels: list | None = None
    label_inventory: list | None = None
    oov_rate: float | None = None


def load_corpus(cfg: RunConfig, path=None, tag_column="config") -> Corpus:
    tag_col = cfg.tag_column if tag_column == "config" else tag_column
    corpus = read_corpus(path or cfg.corpus, cfg.corpus_format, cfg.token_column,
                         tag_col if cfg.corpus_format == "conll" else None, cfg.lowercase)
    if cfg.tag_map and corpus.has_gold:
        with open(cfg.tag_map, encoding="utf-8") as fh:
            corpus = apply_tag_map(corpus, load_tag_map(fh))
    return corpus


def load_dataset(cfg: RunConfig, corpus: Corpus, label_inventory=None) -> Dataset:
    ds = Dataset(corpus)
    if cfg.model in GAUSSIAN_MODELS:
        table = read_embeddings(cfg.embeddings, cfg.embeddings_format, cfg.lowercase)
        ds.vectors, report = embed_corpus(corpus, table)
        ds.oov_rate = report.token_oov_rate
    if cfg.model == "crfae-multinomial":
        with open(cfg.reconstruction_labels, encoding="utf-8") as fh:
            ds.labels, ds.label_inventory = read_label_file(fh, corpus.lengths, label_inventory)
    return ds


def resolve_num_tags(cfg: RunConfig, corpus: Corpus) -> int:
    if cfg.num_tags is not None:
        return cfg.num_tags
    if cfg.tag_map:
        with open(cfg.tag_map, encoding="utf-8") as fh:
            return len(load_tag_map(fh).inventory)
    if corpus.tag_inventory:
        return len(corpus.tag_inventory)
    raise ConfigError("num_tags is required when neither a tag map nor gold tags are available")


# -- model construction -------------------------------------------------------


def make_model(cfg: RunConfig, num_tags: int):
    common = dict(n_components=num_tags, n_init=cfg.n_init, decode_mode=cfg.decode_mode,
                  random_state=cfg.rng_seed)
    if cfg.model == "hmm-gaussian":
        return GaussianHMM(covariance_mode=cfg.covariance_mode, fixed_variance=cfg.fixed_variance,
                           variance_floor=cfg.variance_floor, n_iter=cfg.max_iterations,
                           tol=cfg.tolerance, **common)
    if cfg.model == "hmm-multinomial":
        return MultinomialHMM(n_iter=cfg.max_iterations, tol=cfg.tolerance, **common)
    return CRFAutoencoder(
        reconstruction="gaussian" if cfg.model == "crfae-gaussian" else "multinomial",
        templates=cfg.template_list(), covariance_mode=cfg.covariance_mode,
        fixed_variance=cfg.fixed_variance, variance_floor=cfg.variance_floor,
        n_iter=cfg.max_iterations, inner_steps=cfg.inner_steps, step_size=cfg.step_size,
        l2=cfg.l2, tol=cfg.tolerance, **common)


def _multinomial_ids(corpus: Corpus, vocabulary: list[str]) -> np.ndarray:
    index = {w: i for i, w in enumerate(vocabulary)}
    types = corpus.vocabulary.types
    return np.array([index.get(types[t], -1) for s in corpus.sentences for t in s.tokens],
                    dtype=np.int64)


def fit_model(cfg: RunConfig, ds: Dataset):
    """Train the configured model; returns ``(model, metadata)``."""
    num_tags = resolve_num_tags(cfg, ds.corpus)
    model = make_model(cfg, num_tags)
    meta = {"model": cfg.model, "corpus_format": cfg.corpus_format,
            "token_column": cfg.token_column, "lowercase": cfg.lowercase,
            "embeddings": cfg.embeddings, "embeddings_format": cfg.embeddings_format}
    lengths = ds.corpus.lengths
    try:
        if cfg.model == "hmm-gaussian":
            model.fit(np.vstack(ds.vectors), lengths)
        elif cfg.model == "hmm-multinomial":
            vocab = list(ds.corpus.vocabulary.types)
            model.fit(ds.corpus.token_ids(), lengths)
            meta["vocabulary"] = vocab
        elif cfg.model == "crfae-gaussian":
            model.fit(ds.corpus.words(), ds.vectors)
        else:
            model.fit(ds.corpus.words(), ds.labels)
            meta["label_inventory"] = ds.label_inventory
    except ValueError as exc:
        if isinstance(exc, PosInduceError):
            raise
        raise ConfigError(str(exc)) from exc
    return model, meta


def predict_tags(model, meta: dict, ds: Dataset, mode: str) -> list[np.ndarray]:
    kind = meta["model"]
    lengths = ds.corpus.lengths
    if kind == "hmm-gaussian":
        return hmm.decode(model, np.vstack(ds.vectors), lengths, mode)
    if kind == "hmm-multinomial":
        return hmm.decode(model, _multinomial_ids(ds.corpus, meta["vocabulary"]), lengths, mode)
    if kind == "crfae-gaussian":
        return crfae.decode(model, ds.corpus.words(), ds.vectors, mode)
    return crfae.decode(model, ds.corpus.words(), ds.labels, mode)


# -- commands -----------------------------------------------------------------


def format_float(x: float) -> str:
    return repr(float(x))


def train(cfg: RunConfig) -> dict:
    """Train and write ``model.npz``, ``trace.tsv``, ``config.txt`` and ``timing.tsv``.

    ``trace.tsv`` holds only deterministic values so reruns with the same
    seed are byte-identical; wall-clock times go to ``timing.tsv``.
    """
    cfg.validate()
    corpus = load_corpus(cfg)
    ds = load_dataset(cfg, corpus)
    model, meta = fit_model(cfg, ds)
    os.makedirs(cfg.output, exist_ok=True)
    paths = {name: os.path.join(cfg.output, name)
             for name in ("model.npz", "trace.tsv", "config.txt", "timing.tsv")}
    save_model(model, paths["model.npz"], meta)
    with open(paths["trace.tsv"], "w", encoding="utf-8") as fh:
        fh.write("iteration\tobjective\n")
        for i, v in enumerate(model.trace_, start=1):
            fh.write(f"{i}\t{format_float(v)}\n")
    with open(paths["timing.tsv"], "w", encoding="utf-8") as fh:
        fh.write("iteration\twall_seconds\n")
        for i, s in enumerate(model.iteration_seconds_, start=1):
            fh.write(f"{i}\t{s:.6f}\n")
    with open(paths["config.txt"], "w", encoding="utf-8") as fh:
        fh.write(cfg.dumps())
    return paths


def tag(model_path, corpus_path, output, mode=None, embeddings=None,
        reconstruction_labels=None, corpus_format=None, token_column=None) -> list[np.ndarray]:
    """Decode ``corpus_path`` with a saved model and write one line per sentence."""
    model, meta = load_model(model_path)
    cfg = RunConfig(
        model=meta["model"],
        corpus=corpus_path,
        corpus_format=corpus_format or meta["corpus_format"],
        token_column=meta["token_column"] if token_column is None else token_column,
        lowercase=meta["lowercase"],
        embeddings=embeddings or meta.get("embeddings"),
        embeddings_format=meta.get("embeddings_format", "auto"),
        reconstruction_labels=reconstruction_labels,
        decode_mode=mode or model.decode_mode,
    ).validate()
    corpus = load_corpus(cfg, tag_column=None)
    ds = load_dataset(cfg, corpus, meta.get("label_inventory"))
    preds = predict_tags(model, meta, ds, cfg.decode_mode)
    write_predictions(preds, output)
    return preds


def write_predictions(preds, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for p in preds:
            fh.write(" ".join(str(int(t)) for t in p) + "\n")


def read_predictions(path) -> list[list[str]]:
    with open(path, encoding="utf-8") as fh:
        return [line.split() for line in fh if line.strip()]


def evaluate(predictions_path, gold_path, tag_map=None, token_column=0, tag_column=1,
             embeddings=None, embeddings_format="auto", lowercase=False) -> dict:
    """Score predictions against a gold CoNLL corpus."""
    cfg = RunConfig(corpus=gold_path, token_column=token_column, tag_column=tag_column,
                    tag_map=tag_map, lowercase=lowercase)
    corpus = load_corpus(cfg)
    if not corpus.has_gold:
        raise DataError("gold corpus has no tag column")
    result = metrics.evaluate(corpus.gold(), read_predictions(predictions_path))
    if embeddings:
        table = read_embeddings(embeddings, embeddings_format, lowercase)
        result["oov_rate"] = embed_corpus(corpus, table)[1].token_oov_rate
    return result


def format_metrics(result: dict) -> str:
    lines = []
    for key in ("v_measure", "homogeneity", "completeness", "many_to_one", "token_count", "oov_rate"):
        if key in result:
            v = result[key]
            lines.append(f"{key}\t{v if isinstance(v, int) else format_float(v)}")
    return "\n".join(lines) + "\n"


def parse_metrics(text: str) -> dict:
    out = {}
    for line in text.splitlines():
        if line.strip():
            k, v = line.split("\t")
            out[k] = int(v) if k == "token_count" else float(v)
    return out


# -- sweeps -------------------------------------------------------------------

SWEEP_COLUMNS = ("embedding_type", "window", "dimension", "seed", "v_measure", "homogeneity",
                 "completeness", "many_to_one", "iterations", "wall_seconds", "error")


@dataclass
class SweepCell:
    embedding_type: str
    window: int
    dimension: int
    path: str


@dataclass
class SweepConfig:
    base: RunConfig
    cells: list[SweepCell] = field(default_factory=list)
    seeds: list[int] = field(default_factory=lambda: [0])


def parse_sweep(lines: Iterable[str], overrides: dict | None = None) -> SweepConfig:
    """Sweep files are run configs plus ``seeds = 1,2,3`` and repeated
    ``embedding = <type> <window> <dimension> <path>`` lines."""
    values = parse_key_values(lines, multi=("embedding",))
    cells = []
    for entry in values.pop("embedding"):
        parts = entry.split()
        if len(parts) != 4:
            raise ConfigError(f"embedding entries need 4 fields, got {entry!r}")
        try:
            cells.append(SweepCell(parts[0], int(parts[1]), int(parts[2]), parts[3]))
        except ValueError:
            raise ConfigError(f"bad window/dimension in {entry!r}") from None
    if not cells:
        raise ConfigError("sweep config lists no embedding files")
    seeds_raw = values.pop("seeds", "0")
    try:
        seeds = [int(s) for s in seeds_raw.replace(",", " ").split()]
    except ValueError:
        raise ConfigError(f"bad seeds: {seeds_raw!r}") from None
    base = build_config(values, overrides or {})
    return SweepConfig(base, cells, seeds)


def run_cell(cfg: RunConfig) -> dict:
    tic = time.perf_counter()
    cfg.validate()
    if cfg.tag_column is None:
        raise ConfigError("sweeps need gold tags: set tag_column")
    corpus = load_corpus(cfg)
    ds = load_dataset(cfg, corpus)
    model, meta = fit_model(cfg, ds)
    preds = predict_tags(model, meta, ds, cfg.decode_mode)
    result = metrics.evaluate(corpus.gold(), preds)
    result["iterations"] = len(model.trace_)
    result["wall_seconds"] = time.perf_counter() - tic
    return result


def sweep(sweep_cfg: SweepConfig, output) -> list[dict]:
    """Train and evaluate once per (embedding file, seed); failures become rows."""
    sweep_cfg.base.validate(need_paths=False)
    rows = []
    for cell in sweep_cfg.cells:
        for seed in sweep_cfg.seeds:
            cfg = dataclasses.replace(sweep_cfg.base, embeddings=cell.path, rng_seed=seed)
            row = {"embedding_type": cell.embedding_type, "window": cell.window,
                   "dimension": cell.dimension, "seed": seed, "error": ""}
            try:
                result = run_cell(cfg)
            except (PosInduceError, OSError, ValueError) as exc:
                row["error"] = f"{type(exc).__name__}: {exc}"
            else:
                for key in ("v_measure", "homogeneity", "completeness", "many_to_one"):
                    row[key] = format_float(result[key])
                row["iterations"] = result["iterations"]
                row["wall_seconds"] = f"{result['wall_seconds']:.3f}"
            rows.append(row)
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    with open(output, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return rows


def error_record(exc: BaseException) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})
