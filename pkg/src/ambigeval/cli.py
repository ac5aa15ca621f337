"""Command-line entry point: one subcommand per pipeline stage plus
``pipeline all`` to chain them from a manifest to a report."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .ambiguity import (
    AmbiguityError,
    ambiguity_stats,
    annotate_test_set,
    build_ambiguous_vocabulary,
    read_annotations,
    read_vocabulary,
    write_annotations,
    write_vocabulary,
)
from .annotation import (
    JudgmentStore,
    alignment_accuracy,
    enqueue_samples,
    read_items,
    write_items,
)
from .corpus import CorpusError, corpus_summary, language_display_name, load_corpus
from .lexicon import (
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
from .metrics import (
    MetricError,
    corpus_bleu,
    paired_bootstrap,
    read_scores,
    score_records,
    write_scores,
)
from .pipeline import ConfigError, PipelineConfig, StageError, pipeline_all
from .prompts import (
    FewShotExample,
    PromptCatalog,
    PromptContext,
    PromptError,
)
from .report import DEFAULT_PAIRING, aggregate, delta, emit

log = logging.getLogger("ambigeval")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_STAGE = 2


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        return json.dumps(
            {
                "level": record.levelname.lower(),
                "logger": record.name,
                "message": record.getMessage(),
            },
            ensure_ascii=False,
        )


def _setup_logging(json_logs: bool) -> None:
    handler = logging.StreamHandler(sys.stderr)
    if json_logs:
        handler.setFormatter(_JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.basicConfig(level=logging.INFO, handlers=[handler], force=True)


def _cmd_corpus_validate(args) -> int:
    try:
        corpus = load_corpus(args.manifest)
    except CorpusError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"language pair: {corpus.source_language}-{corpus.target_language}")
    for domain, train, test in corpus_summary(corpus):
        print(f"{domain}\ttrain={train}\ttest={test}")
    return EXIT_OK


def _cmd_lexicon_build(args) -> int:
    corpus = load_corpus(args.manifest)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for domain in corpus.domains:
        entries = []
        for pair in corpus.train_pairs(domain.id):
            entries.extend(
                extract_pairs(pair, corpus.alignment_for(pair), not args.no_casefold)
            )
        lex = filter_lexicon(
            build_domain_lexicon(entries, domain.id), min_count=args.min_count
        )
        path = out / f"{domain.id}.tsv"
        write_lexicon_tsv(lex, path)
        print(f"{domain.id}\t{lex.pair_count()} pairs\t{path}")
    return EXIT_OK


def _load_lexicon_dir(directory: Path):
    lexicons = {}
    for path in sorted(directory.glob("*.tsv")):
        for domain, lex in read_lexicon_tsv(path).items():
            lexicons[domain] = lex
    if not lexicons:
        raise CorpusError(f"no lexicon TSV files under {directory}")
    return lexicons


def _cmd_ambiguity_build(args) -> int:
    lexicons = _load_lexicon_dir(Path(args.lexicons))
    vocabularies = build_ambiguous_vocabulary(lexicons)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for domain, vocab in sorted(vocabularies.items()):
        path = out / f"{domain}.json"
        write_vocabulary(vocab, path)
        print(f"{domain}\t{len(vocab.entries)} ambiguous words\t{path}")
    return EXIT_OK


def _cmd_ambiguity_annotate(args) -> int:
    manifest, _, domain = args.test.partition(":")
    if not domain:
        print("error: --test expects MANIFEST:DOMAIN", file=sys.stderr)
        return EXIT_VALIDATION
    corpus = load_corpus(manifest)
    vocab = read_vocabulary(args.vocab)
    occurrences = annotate_test_set(corpus.test_pairs(domain), vocab)
    write_annotations(occurrences, args.out)
    print(f"{domain}\t{len(occurrences)} occurrences\t{args.out}")
    return EXIT_OK


def _cmd_ambiguity_stats(args) -> int:
    annotations = {}
    for path in sorted(Path(args.dir).glob("*.jsonl")):
        annotations[path.stem] = read_annotations(path)
    stats = ambiguity_stats(annotations)
    print("domain\toccurrences\tdistinct_words\tsentences")
    for domain in sorted(stats):
        s = stats[domain]
        print(f"{domain}\t{s.occurrences}\t{s.distinct_words}\t{s.sentences}")
    return EXIT_OK


def _cmd_annotate_sample(args) -> int:
    lexicons = _load_lexicon_dir(Path(args.lexicons))
    examples = None
    if args.manifest:
        from .annotation import find_example_lines

        corpus = load_corpus(args.manifest)
        examples = {}
        for domain, lex in lexicons.items():
            train = corpus.train_pairs(domain)
            for source, targets in lex.entries.items():
                for target in targets:
                    examples[(domain, source, target)] = find_example_lines(
                        train, source, target
                    )
    items = enqueue_samples(lexicons, args.size, args.seed, examples=examples)
    write_items(items, args.out)
    print(f"{len(items)} review items -> {args.out}")
    return EXIT_OK


def _cmd_annotate_accuracy(args) -> int:
    items = read_items(args.items)
    store = JudgmentStore(args.journal, items)
    result = alignment_accuracy(store.active_judgments(), store.item_domains())
    print("domain\tcorrect\tpartially_correct\tincorrect\ttotal")
    for domain, acc in sorted(result.items()):
        pct = acc.percentages()
        print(
            f"{domain}\t{pct['correct']}%\t{pct['partially_correct']}%\t"
            f"{pct['incorrect']}%\t{acc.total}"
        )
    return EXIT_OK


def _cmd_annotate_serve(args) -> int:
    import uvicorn

    from .service import create_app

    items = read_items(args.items) if args.items else []
    store = JudgmentStore(args.journal, items)
    vocabs = {}
    if args.vocab_dir:
        for path in sorted(Path(args.vocab_dir).glob("*.json")):
            vocab = read_vocabulary(path)
            vocabs[vocab.domain] = vocab

    def save_vocabs(changed):
        if not args.vocab_dir:
            return
        for domain, vocab in changed.items():
            write_vocabulary(vocab, Path(args.vocab_dir) / f"{domain}.json")

    app = create_app(store, vocabs, on_vocab_change=save_vocabs)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return EXIT_OK


def _cmd_prompts_render(args) -> int:
    catalog = PromptCatalog.load(args.catalog) if args.catalog else PromptCatalog.load()
    examples = None
    if args.examples:
        examples = [
            FewShotExample(**raw) for raw in json.loads(Path(args.examples).read_text())
        ]
    ctx = PromptContext(
        source_sentence=args.sentence,
        target_language=args.target,
        domain=args.domain,
        few_shot_examples=examples,
        word_domain_tags=json.loads(args.word_tags) if args.word_tags else None,
        domain_choices=args.domain_choices.split(",") if args.domain_choices else None,
        prior_hypothesis=args.prior_hypothesis,
    )
    if ctx.word_domain_tags:
        ctx.word_domain_tags = {int(k): v for k, v in ctx.word_domain_tags.items()}
    if args.prior_hypothesis:
        rendered = catalog.build_reflection_turns(args.template, ctx)
    else:
        rendered = catalog.render(args.template, ctx)
    for role, content in rendered.messages:
        print(f"[{role}]")
        print(content)
    return EXIT_OK


def _cmd_prompts_show(args) -> int:
    catalog = PromptCatalog.load(args.catalog) if args.catalog else PromptCatalog.load()
    entry = catalog.templates.get(args.template)
    if entry is None:
        print(f"error: unknown template {args.template}", file=sys.stderr)
        return EXIT_VALIDATION
    print(json.dumps(entry, indent=2, ensure_ascii=False))
    print(f"catalog checksum: {catalog.checksum()}")
    return EXIT_OK


def _make_backend(args):
    if args.backend == "mock":
        spec = {"fallback": args.mock_fallback}
        if args.dictionary:
            spec["dictionary"] = args.dictionary
        return MockBackend(load_mock_rule(spec))
    return OpenAIBackend()


def _cmd_run(args) -> int:
    corpus = load_corpus(args.manifest)
    backend = _make_backend(args)
    dataset = corpus.test_pairs(args.domain)
    if not dataset:
        print(f"error: no test pairs for domain {args.domain!r}", file=sys.stderr)
        return EXIT_VALIDATION
    tags_by_line = {}
    if args.annotations:
        for occ in read_annotations(args.annotations):
            tags_by_line.setdefault(occ.line_no, {})[occ.token_index] = args.domain
    cfg = GenerationConfig.for_template(
        args.template, model_name=args.model, temperature=args.temperature
    )
    records = run_strategy(
        dataset,
        args.template,
        cfg,
        backend,
        parallelism=args.parallelism,
        target_language=language_display_name(corpus.target_language),
        domain_display=corpus.domain(args.domain).display_name,
        word_tags_by_line=tags_by_line,
        few_shot_pool=[p for p in corpus.pairs if p.split == "train"],
        few_shot_seed=args.few_shot_seed,
        domain_display_map={d.id: d.display_name for d in corpus.domains},
        domain_choices=[d.display_name for d in corpus.domains],
        checkpoint_path=str(args.out) + ".partial",
    )
    write_run_file(records, args.out)
    checkpoint = Path(str(args.out) + ".partial")
    if checkpoint.exists():
        checkpoint.unlink()
    errors = sum(1 for r in records if r.error)
    print(f"{len(records)} records ({errors} errors) -> {args.out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    records = read_run_file(args.run)
    annotations = read_annotations(args.annotations) if args.annotations else None
    comet = None
    if args.scorer_url:
        from .metrics import external_score

        scores = external_score(records, args.scorer_url)
        if scores is not None:
            comet = next(iter(scores.by_domain.values()))
    payload = score_records(
        records, annotations, args.target_lang, mode=args.mode, comet=comet
    )
    write_scores(payload, args.out)
    disamb = payload.get("disamb")
    extra = ""
    if disamb:
        extra = f", disamb {disamb['m']}/{disamb['n']}"
    print(f"bleu {payload['bleu']:.2f}{extra} -> {args.out}")
    return EXIT_OK


def _cmd_significance(args) -> int:
    records_a = read_run_file(args.run_a)
    records_b = read_run_file(args.run_b)
    if args.metric != "bleu":
        print(f"error: unsupported metric {args.metric}", file=sys.stderr)
        return EXIT_VALIDATION

    def metric(records):
        return corpus_bleu(records, args.target_lang).score

    result = paired_bootstrap(
        records_a, records_b, metric, n_resamples=args.resamples, seed=args.seed
    )
    verdict = "significant" if result.p_value < 0.05 else "not significant"
    print(
        f"better system: {result.better_system}, p={result.p_value:.4f} "
        f"({result.n_resamples} resamples): {verdict}"
    )
    return EXIT_OK


def _cmd_report(args) -> int:
    payloads = [read_scores(p) for p in sorted(Path(args.scores).glob("*.json"))]
    if not payloads:
        print(f"error: no score files under {args.scores}", file=sys.stderr)
        return EXIT_VALIDATION
    table = aggregate(payloads)
    deltas = delta(table, DEFAULT_PAIRING) if args.pairing == "default" else []
    emit(table, deltas, args.format, args.out)
    print(f"report -> {args.out}")
    return EXIT_OK


def _cmd_pipeline_all(args) -> int:
    try:
        cfg = PipelineConfig.load(args.config)
    except (ConfigError, CorpusError) as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        status = pipeline_all(cfg, force=args.force)
    except StageError as exc:
        print(f"stage error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    for stage, state in status.items():
        print(f"{stage}\t{state}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ambigeval",
        description="Multi-domain ambiguous-word translation evaluation toolkit",
    )
    parser.add_argument("--version", action="version", version=f"ambigeval {__version__}")
    parser.add_argument("--json-logs", action="store_true", help="JSON log lines on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("corpus", help="corpus operations")
    corpus_sub = p.add_subparsers(dest="subcommand", required=True)
    v = corpus_sub.add_parser("validate", help="validate a corpus manifest")
    v.add_argument("manifest")
    v.set_defaults(func=_cmd_corpus_validate)

    p = sub.add_parser("lexicon", help="lexicon operations")
    lexicon_sub = p.add_subparsers(dest="subcommand", required=True)
    b = lexicon_sub.add_parser("build", help="build per-domain lexicons")
    b.add_argument("manifest")
    b.add_argument("--out", required=True)
    b.add_argument("--min-count", type=int, default=1)
    b.add_argument("--no-casefold", action="store_true")
    b.set_defaults(func=_cmd_lexicon_build)

    p = sub.add_parser("ambiguity", help="ambiguous vocabulary operations")
    ambiguity_sub = p.add_subparsers(dest="subcommand", required=True)
    b = ambiguity_sub.add_parser("build")
    b.add_argument("--lexicons", required=True)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_ambiguity_build)
    a = ambiguity_sub.add_parser("annotate")
    a.add_argument("--vocab", required=True)
    a.add_argument("--test", required=True, metavar="MANIFEST:DOMAIN")
    a.add_argument("--out", required=True)
    a.set_defaults(func=_cmd_ambiguity_annotate)
    s = ambiguity_sub.add_parser("stats")
    s.add_argument("dir")
    s.set_defaults(func=_cmd_ambiguity_stats)

    p = sub.add_parser("annotate", help="human review service and tools")
    annotate_sub = p.add_subparsers(dest="subcommand", required=True)
    s = annotate_sub.add_parser("sample")
    s.add_argument("--lexicons", required=True)
    s.add_argument("--size", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--manifest", help="corpus manifest for example-sentence lookup")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_annotate_sample)
    a = annotate_sub.add_parser("accuracy")
    a.add_argument("--journal", required=True)
    a.add_argument("--items", required=True)
    a.set_defaults(func=_cmd_annotate_accuracy)
    srv = annotate_sub.add_parser("serve")
    srv.add_argument("--port", type=int, default=8000)
    srv.add_argument("--host", default="127.0.0.1")
    srv.add_argument("--journal", required=True)
    srv.add_argument("--items")
    srv.add_argument("--vocab-dir")
    srv.set_defaults(func=_cmd_annotate_serve)

    p = sub.add_parser("prompts", help="template rendering")
    prompts_sub = p.add_subparsers(dest="subcommand", required=True)
    r = prompts_sub.add_parser("render")
    r.add_argument("--template", required=True)
    r.add_argument("--sentence", required=True)
    r.add_argument("--target", required=True)
    r.add_argument("--domain")
    r.add_argument("--examples", help="JSON file with few-shot examples")
    r.add_argument("--word-tags", help='JSON map of token index to domain, e.g. {"8": "laws"}')
    r.add_argument("--domain-choices", help="comma-separated domain list for T8")
    r.add_argument("--prior-hypothesis", help="render the reflection turn")
    r.add_argument("--catalog")
    r.set_defaults(func=_cmd_prompts_render)
    sh = prompts_sub.add_parser("show")
    sh.add_argument("template")
    sh.add_argument("--catalog")
    sh.set_defaults(func=_cmd_prompts_show)

    r = sub.add_parser("run", help="run one strategy over one domain's test set")
    r.add_argument("--manifest", required=True)
    r.add_argument("--template", required=True)
    r.add_argument("--domain", required=True)
    r.add_argument("--backend", choices=("openai", "mock"), default="mock")
    r.add_argument("--dictionary", help="mock dictionary JSON file")
    r.add_argument("--mock-fallback", choices=("echo", "drop"), default="echo")
    r.add_argument("--model", default="default")
    r.add_argument("--temperature", type=float, default=0.8)
    r.add_argument("--parallelism", type=int, default=4)
    r.add_argument("--annotations", help="annotation JSONL for word tags (T6)")
    r.add_argument("--few-shot-seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("score", help="score a run file")
    s.add_argument("--run", required=True)
    s.add_argument("--annotations")
    s.add_argument("--target-lang", required=True)
    s.add_argument("--mode", choices=("lenient", "strict"), default="lenient")
    s.add_argument("--scorer-url", help="external scorer endpoint (COMET-style)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=_cmd_score)

    g = sub.add_parser("significance", help="paired bootstrap between two runs")
    g.add_argument("--run-a", required=True)
    g.add_argument("--run-b", required=True)
    g.add_argument("--metric", default="bleu")
    g.add_argument("--target-lang", required=True)
    g.add_argument("--resamples", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.set_defaults(func=_cmd_significance)

    rep = sub.add_parser("report", help="aggregate score files into a table")
    rep.add_argument("--scores", required=True)
    rep.add_argument("--pairing", default="default", choices=("default", "none"))
    rep.add_argument("--format", default="markdown", choices=("markdown", "csv", "json"))
    rep.add_argument("--out", required=True)
    rep.set_defaults(func=_cmd_report)

    p = sub.add_parser("pipeline", help="chained stages")
    pipeline_sub = p.add_subparsers(dest="subcommand", required=True)
    al = pipeline_sub.add_parser("all")
    al.add_argument("--config", required=True)
    al.add_argument("--force", action="store_true")
    al.set_defaults(func=_cmd_pipeline_all)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.json_logs)
    try:
        return args.func(args)
    except (CorpusError, AmbiguityError, MetricError, PromptError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
