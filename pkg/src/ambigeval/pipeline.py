"""End-to-end orchestration: manifest -> lexicons -> vocabularies ->
annotations -> runs -> scores -> report.

Stages are skipped on re-runs when their input checksums match the stamp
recorded on the previous run (content-based, not timestamps), so a
finished pipeline re-run executes nothing. In-progress artifacts carry a
``.partial`` suffix until their stage completes.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .ambiguity import (
    annotate_test_set,
    build_ambiguous_vocabulary,
    read_annotations,
    read_vocabulary,
    write_annotations,
    write_vocabulary,
)
from .corpus import language_display_name, load_corpus
from .lexicon import (
    DEFAULT_MIN_COUNT,
    DomainLexicon,
    build_domain_lexicon,
    extract_pairs,
    filter_lexicon,
    read_lexicon_tsv,
    write_lexicon_tsv,
)
from .llmclient import (
    GenerationConfig,
    MockBackend,
    OpenAIBackend,
    load_mock_rule,
    read_run_file,
    run_strategy,
    write_run_file,
)
from .metrics import read_scores, score_records, write_scores
from .prompts import TEMPLATE_IDS
from .report import DEFAULT_PAIRING, aggregate, delta, emit

log = logging.getLogger(__name__)

STAGES = ("lexicons", "vocab", "annotations", "runs", "scores", "report")


class ConfigError(ValueError):
    pass


class StageError(RuntimeError):
    def __init__(self, stage: str, artifact: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed at {artifact}: {cause}")
        self.stage = stage
        self.artifact = artifact
        self.cause = cause


@dataclass
class PipelineConfig:
    manifest: Path
    output_dir: Path
    templates: list[str]
    backend: dict
    seeds: dict
    generation: dict = field(default_factory=dict)
    metric_mode: str = "lenient"
    min_count: int = DEFAULT_MIN_COUNT
    casefold: bool = True
    parallelism: int = 4
    report_format: str = "markdown"

    @classmethod
    def load(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        raw = json.loads(path.read_text(encoding="utf-8"))
        for key in ("manifest", "output_dir", "templates", "backend", "seeds"):
            if key not in raw:
                raise ConfigError(f"config missing key {key!r}")
        base = path.parent
        cfg = cls(
            manifest=(base / raw["manifest"]).resolve(),
            output_dir=(base / raw["output_dir"]).resolve(),
            templates=list(raw["templates"]),
            backend=dict(raw["backend"]),
            seeds=dict(raw["seeds"]),
            generation=dict(raw.get("generation", {})),
            metric_mode=raw.get("metric_mode", "lenient"),
            min_count=int(raw.get("min_count", DEFAULT_MIN_COUNT)),
            casefold=bool(raw.get("casefold", True)),
            parallelism=int(raw.get("parallelism", 4)),
            report_format=raw.get("report_format", "markdown"),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not self.manifest.is_file():
            raise ConfigError(f"manifest not found: {self.manifest}")
        for template in self.templates:
            if template not in TEMPLATE_IDS:
                raise ConfigError(f"unknown template {template!r}")
        for seed_name in ("sampling", "bootstrap", "few_shot"):
            if seed_name not in self.seeds:
                raise ConfigError(
                    f"seeds must set {seed_name!r} explicitly (no wall-clock defaults)"
                )
            if not isinstance(self.seeds[seed_name], int):
                raise ConfigError(f"seed {seed_name!r} must be an integer")
        if self.backend.get("type") not in ("mock", "openai"):
            raise ConfigError("backend.type must be 'mock' or 'openai'")
        if self.metric_mode not in ("lenient", "strict"):
            raise ConfigError(f"unknown metric_mode {self.metric_mode!r}")

    def checksum(self) -> str:
        canonical = json.dumps(
            {
                "manifest": str(self.manifest),
                "templates": self.templates,
                "backend": self.backend,
                "seeds": self.seeds,
                "generation": self.generation,
                "metric_mode": self.metric_mode,
                "min_count": self.min_count,
                "casefold": self.casefold,
                "report_format": self.report_format,
            },
            sort_keys=True,
            ensure_ascii=False,
        )
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def make_backend(self):
        if self.backend["type"] == "mock":
            return MockBackend(load_mock_rule(self.backend))
        return OpenAIBackend(base_url=self.backend.get("base_url"))

    def generation_config(self, template: str) -> GenerationConfig:
        return GenerationConfig.for_template(template, **self.generation)


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class _Stamps:
    """Content-checksum records that let finished stages be skipped.

    Artifact paths are stored relative to the output directory so stamp
    files are identical across machines and working directories.
    """

    def __init__(self, output_dir: Path, config_checksum: str):
        self.output_dir = output_dir
        self.dir = output_dir / ".stamps"
        self.dir.mkdir(parents=True, exist_ok=True)
        self.config_checksum = config_checksum

    def _path(self, stage: str) -> Path:
        return self.dir / f"{stage}.json"

    def _key(self, path: Path) -> str:
        try:
            return str(path.relative_to(self.output_dir))
        except ValueError:
            return path.name

    def inputs_checksum(self, paths: list[Path]) -> str:
        digest = hashlib.sha256()
        for path in sorted(paths, key=self._key):
            digest.update(self._key(path).encode("utf-8"))
            digest.update(_sha256_file(path).encode("ascii"))
        return digest.hexdigest()

    def is_current(self, stage: str, inputs: str) -> bool:
        path = self._path(stage)
        if not path.is_file():
            return False
        try:
            stamp = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return False
        if stamp.get("inputs") != inputs or stamp.get("config") != self.config_checksum:
            return False
        for artifact, checksum in stamp.get("outputs", {}).items():
            artifact_path = self.output_dir / artifact
            if not artifact_path.is_file() or _sha256_file(artifact_path) != checksum:
                return False
        return True

    def write(self, stage: str, inputs: str, outputs: list[Path]) -> None:
        stamp = {
            "stage": stage,
            "inputs": inputs,
            "config": self.config_checksum,
            "version": __version__,
            "outputs": {self._key(p): _sha256_file(p) for p in outputs},
        }
        self._path(stage).write_text(
            json.dumps(stamp, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )


def _finalize(partial: Path) -> Path:
    final = partial.with_name(partial.name.removesuffix(".partial"))
    os.replace(partial, final)
    return final


def pipeline_all(cfg: PipelineConfig, force: bool = False) -> dict[str, str]:
    """Run every stage; returns {stage: "run" | "skipped"}."""
    cfg.validate()
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    stamps = _Stamps(cfg.output_dir, cfg.checksum())
    status: dict[str, str] = {}

    corpus = load_corpus(cfg.manifest)
    manifest_inputs = stamps.inputs_checksum(_manifest_files(cfg.manifest))

    lexicon_dir = cfg.output_dir / "lexicons"
    vocab_dir = cfg.output_dir / "vocab"
    annotation_dir = cfg.output_dir / "annotations"
    run_dir = cfg.output_dir / "runs"
    score_dir = cfg.output_dir / "scores"
    for directory in (lexicon_dir, vocab_dir, annotation_dir, run_dir, score_dir):
        directory.mkdir(exist_ok=True)

    domain_ids = [d.id for d in corpus.domains]
    lexicon_paths = {d: lexicon_dir / f"{d}.tsv" for d in domain_ids}
    vocab_paths = {d: vocab_dir / f"{d}.json" for d in domain_ids}
    annotation_paths = {d: annotation_dir / f"{d}.jsonl" for d in domain_ids}

    # --- stage: lexicons ------------------------------------------------
    stage = "lexicons"
    if not force and stamps.is_current(stage, manifest_inputs):
        status[stage] = "skipped"
    else:
        artifact = ""
        try:
            for domain in domain_ids:
                artifact = str(lexicon_paths[domain])
                entries = []
                for pair in corpus.train_pairs(domain):
                    entries.extend(
                        extract_pairs(pair, corpus.alignment_for(pair), cfg.casefold)
                    )
                lex = filter_lexicon(
                    build_domain_lexicon(entries, domain), min_count=cfg.min_count
                )
                partial = lexicon_paths[domain].with_name(
                    lexicon_paths[domain].name + ".partial"
                )
                write_lexicon_tsv(lex, partial)
                _finalize(partial)
        except Exception as exc:
            raise StageError(stage, artifact, exc) from exc
        stamps.write(stage, manifest_inputs, list(lexicon_paths.values()))
        status[stage] = "run"

    # --- stage: vocab ---------------------------------------------------
    stage = "vocab"
    lexicon_inputs = stamps.inputs_checksum(list(lexicon_paths.values()))
    if not force and stamps.is_current(stage, lexicon_inputs):
        status[stage] = "skipped"
    else:
        artifact = ""
        try:
            lexicons = {}
            for domain in domain_ids:
                loaded = read_lexicon_tsv(lexicon_paths[domain])
                # a fully filtered lexicon leaves an empty TSV; the domain
                # still participates with no entries
                lexicons[domain] = loaded.get(domain) or DomainLexicon(domain)
            vocabularies = build_ambiguous_vocabulary(lexicons)
            for domain in domain_ids:
                artifact = str(vocab_paths[domain])
                partial = vocab_paths[domain].with_name(
                    vocab_paths[domain].name + ".partial"
                )
                write_vocabulary(vocabularies[domain], partial)
                _finalize(partial)
        except Exception as exc:
            raise StageError(stage, artifact, exc) from exc
        stamps.write(stage, lexicon_inputs, list(vocab_paths.values()))
        status[stage] = "run"

    # --- stage: annotations ----------------------------------------------
    # depends on the vocabularies and on the test sets themselves
    stage = "annotations"
    vocab_inputs = stamps.inputs_checksum(
        list(vocab_paths.values()) + _manifest_files(cfg.manifest)
    )
    if not force and stamps.is_current(stage, vocab_inputs):
        status[stage] = "skipped"
    else:
        artifact = ""
        try:
            for domain in domain_ids:
                artifact = str(annotation_paths[domain])
                vocab = read_vocabulary(vocab_paths[domain])
                occurrences = annotate_test_set(
                    corpus.test_pairs(domain), vocab, cfg.casefold
                )
                partial = annotation_paths[domain].with_name(
                    annotation_paths[domain].name + ".partial"
                )
                write_annotations(occurrences, partial)
                _finalize(partial)
        except Exception as exc:
            raise StageError(stage, artifact, exc) from exc
        stamps.write(stage, vocab_inputs, list(annotation_paths.values()))
        status[stage] = "run"

    # --- stage: runs ------------------------------------------------------
    stage = "runs"
    run_paths = {
        (template, domain): run_dir / f"{template}.{domain}.jsonl"
        for template in cfg.templates
        for domain in domain_ids
    }
    annotation_inputs = stamps.inputs_checksum(
        list(annotation_paths.values()) + _manifest_files(cfg.manifest)
    )
    if not force and stamps.is_current(stage, annotation_inputs):
        status[stage] = "skipped"
    else:
        artifact = ""
        backend = cfg.make_backend()
        target_display = language_display_name(corpus.target_language)
        train_pool = [p for p in corpus.pairs if p.split == "train"]
        try:
            for (template, domain), run_path in run_paths.items():
                artifact = str(run_path)
                occurrences = read_annotations(annotation_paths[domain])
                tags_by_line: dict[int, dict[int, str]] = {}
                for occ in occurrences:
                    tags_by_line.setdefault(occ.line_no, {})[occ.token_index] = domain
                records = run_strategy(
                    corpus.test_pairs(domain),
                    template,
                    cfg.generation_config(template),
                    backend,
                    parallelism=cfg.parallelism,
                    target_language=target_display,
                    domain_display=corpus.domain(domain).display_name,
                    word_tags_by_line=tags_by_line,
                    few_shot_pool=train_pool,
                    few_shot_seed=cfg.seeds["few_shot"],
                    domain_display_map={
                        d.id: d.display_name for d in corpus.domains
                    },
                    domain_choices=[d.display_name for d in corpus.domains],
                    checkpoint_path=run_path.with_name(run_path.name + ".partial"),
                )
                write_run_file(records, run_path)
                checkpoint = run_path.with_name(run_path.name + ".partial")
                if checkpoint.exists():
                    checkpoint.unlink()
        except Exception as exc:
            raise StageError(stage, artifact, exc) from exc
        stamps.write(stage, annotation_inputs, list(run_paths.values()))
        status[stage] = "run"

    # --- stage: scores -----------------------------------------------------
    stage = "scores"
    score_paths = {
        (template, domain): score_dir / f"{template}.{domain}.json"
        for (template, domain) in run_paths
    }
    run_inputs = stamps.inputs_checksum(
        list(run_paths.values()) + list(annotation_paths.values())
    )
    if not force and stamps.is_current(stage, run_inputs):
        status[stage] = "skipped"
    else:
        artifact = ""
        try:
            for (template, domain), run_path in run_paths.items():
                score_path = score_paths[(template, domain)]
                artifact = str(score_path)
                records = read_run_file(run_path)
                occurrences = read_annotations(annotation_paths[domain])
                payload = score_records(
                    records,
                    occurrences,
                    corpus.target_language,
                    mode=cfg.metric_mode,
                )
                payload["meta"] = {
                    "config_checksum": cfg.checksum(),
                    "version": __version__,
                }
                partial = score_path.with_name(score_path.name + ".partial")
                write_scores(payload, partial)
                _finalize(partial)
        except Exception as exc:
            raise StageError(stage, artifact, exc) from exc
        stamps.write(stage, run_inputs, list(score_paths.values()))
        status[stage] = "run"

    # --- stage: report -------------------------------------------------------
    stage = "report"
    extension = {"markdown": "md", "csv": "csv", "json": "json"}[cfg.report_format]
    report_path = cfg.output_dir / f"report.{extension}"
    score_inputs = stamps.inputs_checksum(list(score_paths.values()))
    if not force and stamps.is_current(stage, score_inputs):
        status[stage] = "skipped"
    else:
        try:
            payloads = [read_scores(p) for p in score_paths.values()]
            table = aggregate(
                payloads,
                meta={"config_checksum": cfg.checksum(), "version": __version__},
            )
            deltas = delta(table, DEFAULT_PAIRING)
            partial = report_path.with_name(report_path.name + ".partial")
            emit(table, deltas, cfg.report_format, partial)
            _finalize(partial)
        except Exception as exc:
            raise StageError(stage, str(report_path), exc) from exc
        stamps.write(stage, score_inputs, [report_path])
        status[stage] = "run"

    return status


def _manifest_files(manifest_path: Path) -> list[Path]:
    """The manifest plus every data file it references."""
    raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    files = [manifest_path]
    for entry in raw.get("domains", []):
        for key in ("train_src", "train_tgt", "train_align", "test_src", "test_tgt"):
            if key in entry:
                files.append(manifest_path.parent / entry[key])
    return [f for f in files if f.is_file()]
