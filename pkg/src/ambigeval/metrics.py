"""Scoring: corpus BLEU, disambiguation accuracy, paired bootstrap, GPT judge.

BLEU is the standard corpus metric: modified 1-4-gram precisions with
clipping, geometric mean, brevity penalty exp(1-r/c), and exponential
smoothing of zero counts (each zero-match order halves the credit again).
Orders with no hypothesis n-grams at all are excluded from the geometric
mean so an identity corpus of very short sentences still scores 100.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

import requests

from .ambiguity import AnnotatedOccurrence
from .corpus import tokenize
from .lexicon import normalize_token

log = logging.getLogger(__name__)

NGRAM_ORDER = 4
DEFAULT_RESAMPLES = 1000
SIGNIFICANCE_LEVEL = 0.05


class MetricError(ValueError):
    pass


class JudgeError(RuntimeError):
    pass


@dataclass
class EvalRecord:
    """One hypothesis for one (sentence, strategy)."""

    line_no: int
    domain: str
    template: str
    source: str
    reference: str
    hypothesis: str
    exchanges: list = field(default_factory=list)
    error: str | None = None

    def __post_init__(self):
        if bool(self.hypothesis) == bool(self.error):
            raise ValueError(
                f"line {self.line_no}: hypothesis must be empty iff error is set"
            )


@dataclass(frozen=True)
class BleuScore:
    score: float  # 0-100
    ngram_precisions: tuple[float, float, float, float]  # percentages
    brevity_penalty: float
    hyp_len: int
    ref_len: int


@dataclass(frozen=True)
class DisambiguationResult:
    n: int
    m: int

    def __post_init__(self):
        if not (0 <= self.m <= self.n):
            raise MetricError(f"invalid counts m={self.m}, n={self.n}")

    @property
    def accuracy(self) -> float | None:
        if self.n == 0:
            return None
        return self.m / self.n


@dataclass(frozen=True)
class SignificanceResult:
    p_value: float
    n_resamples: int
    better_system: str

    def __post_init__(self):
        if self.n_resamples < 100:
            raise MetricError("n_resamples must be >= 100")
        if not (0 <= self.p_value <= 1):
            raise MetricError(f"invalid p_value {self.p_value}")


def _scored(records: list[EvalRecord]) -> list[EvalRecord]:
    return [r for r in records if r.error is None]


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


@lru_cache(maxsize=65536)
def _pair_stats(
    hypothesis: str, reference: str, language: str
) -> tuple[tuple[int, ...], tuple[int, ...], int, int]:
    """Clipped-match and total n-gram counts for one sentence pair.

    Cached because bootstrap resampling rescores the same pairs thousands
    of times.
    """
    hyp_tokens = tokenize(hypothesis, language)
    ref_tokens = tokenize(reference, language)
    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    for n in range(1, NGRAM_ORDER + 1):
        hyp_ngrams = _ngrams(hyp_tokens, n)
        ref_ngrams = _ngrams(ref_tokens, n)
        total[n - 1] = sum(hyp_ngrams.values())
        correct[n - 1] = sum(
            min(count, ref_ngrams.get(gram, 0)) for gram, count in hyp_ngrams.items()
        )
    return tuple(correct), tuple(total), len(hyp_tokens), len(ref_tokens)


def corpus_bleu(records: list[EvalRecord], language: str) -> BleuScore:
    """Corpus BLEU over the non-errored records, 0-100 scale.

    ``language`` selects the tokenizer for both hypothesis and reference
    (per-character for CJK targets).
    """
    scorable = _scored(records)
    if not scorable:
        raise MetricError("no scorable records: all carry errors")

    correct = [0] * NGRAM_ORDER
    total = [0] * NGRAM_ORDER
    hyp_len = 0
    ref_len = 0
    for record in scorable:
        pair_correct, pair_total, pair_hyp_len, pair_ref_len = _pair_stats(
            record.hypothesis, record.reference, language
        )
        hyp_len += pair_hyp_len
        ref_len += pair_ref_len
        for n in range(NGRAM_ORDER):
            total[n] += pair_total[n]
            correct[n] += pair_correct[n]

    if total[0] == 0:
        raise MetricError("hypotheses contain no tokens")

    precisions = [0.0] * NGRAM_ORDER
    smoothing = 1.0
    log_sum = 0.0
    effective_order = 0
    for n in range(1, NGRAM_ORDER + 1):
        if total[n - 1] == 0:
            break
        effective_order = n
        if correct[n - 1] == 0:
            smoothing *= 2
            precisions[n - 1] = 100.0 / (smoothing * total[n - 1])
        else:
            precisions[n - 1] = 100.0 * correct[n - 1] / total[n - 1]
        log_sum += math.log(precisions[n - 1])

    brevity_penalty = 1.0
    if hyp_len < ref_len:
        brevity_penalty = math.exp(1 - ref_len / hyp_len)
    score = brevity_penalty * math.exp(log_sum / effective_order)
    return BleuScore(
        score=score,
        ngram_precisions=tuple(precisions),
        brevity_penalty=brevity_penalty,
        hyp_len=hyp_len,
        ref_len=ref_len,
    )


def _contains_subsequence(haystack: list[str], needle: list[str]) -> bool:
    if not needle or len(needle) > len(haystack):
        return False
    for i in range(len(haystack) - len(needle) + 1):
        if haystack[i : i + len(needle)] == needle:
            return True
    return False


def disambiguation_accuracy(
    records: list[EvalRecord],
    annotations: list[AnnotatedOccurrence],
    language: str,
    mode: str = "lenient",
    casefold: bool = True,
) -> DisambiguationResult:
    """Fraction of annotated ambiguous occurrences translated correctly.

    An occurrence counts toward ``n`` when its sentence has a non-errored
    hypothesis. It counts toward ``m`` when the normalized hypothesis
    contains at least one expected in-domain translation as a contiguous
    token subsequence; ``strict`` mode additionally rejects hypotheses
    containing any distractor outside the expected set. Each occurrence of
    a repeated word is judged independently against the same hypothesis.
    """
    if mode not in ("lenient", "strict"):
        raise MetricError(f"unknown mode {mode!r}")
    by_line = {record.line_no: record for record in records}

    def target_tokens(text: str) -> list[str]:
        return [normalize_token(t, casefold) for t in tokenize(text, language)]

    n = 0
    m = 0
    for occurrence in annotations:
        record = by_line.get(occurrence.line_no)
        if record is None:
            log.warning(
                "annotation at line %d has no run record; skipped", occurrence.line_no
            )
            continue
        if record.error is not None:
            continue
        n += 1
        hyp_tokens = target_tokens(record.hypothesis)
        matched = any(
            _contains_subsequence(hyp_tokens, target_tokens(expected))
            for expected in occurrence.expected
        )
        if matched and mode == "strict":
            for distractor in occurrence.distractors - occurrence.expected:
                if _contains_subsequence(hyp_tokens, target_tokens(distractor)):
                    matched = False
                    break
        if matched:
            m += 1
    return DisambiguationResult(n=n, m=m)


def paired_bootstrap(
    records_a: list[EvalRecord],
    records_b: list[EvalRecord],
    metric,
    n_resamples: int = DEFAULT_RESAMPLES,
    seed: int = 0,
) -> SignificanceResult:
    """Paired bootstrap significance test between two systems.

    Both record lists must cover the same line numbers. Each resample
    draws lines with replacement; the p-value is the fraction of resamples
    where the overall lower-scoring system reaches or beats the higher-
    scoring one.
    """
    if n_resamples < 100:
        raise MetricError("n_resamples must be >= 100")
    a_by_line = {r.line_no: r for r in records_a}
    b_by_line = {r.line_no: r for r in records_b}
    if set(a_by_line) != set(b_by_line):
        only_a = sorted(set(a_by_line) - set(b_by_line))[:5]
        only_b = sorted(set(b_by_line) - set(a_by_line))[:5]
        raise MetricError(
            f"record sets are misaligned (only in a: {only_a}, only in b: {only_b})"
        )
    lines = sorted(a_by_line)

    score_a = metric(records_a)
    score_b = metric(records_b)
    if score_a >= score_b:
        better, worse = "a", "b"
        better_records, worse_records = a_by_line, b_by_line
    else:
        better, worse = "b", "a"
        better_records, worse_records = b_by_line, a_by_line

    rng = random.Random(seed)
    hits = 0
    for _ in range(n_resamples):
        sample = [lines[rng.randrange(len(lines))] for _ in lines]
        sample_better = metric([better_records[ln] for ln in sample])
        sample_worse = metric([worse_records[ln] for ln in sample])
        if sample_worse >= sample_better:
            hits += 1
    return SignificanceResult(
        p_value=hits / n_resamples, n_resamples=n_resamples, better_system=better
    )


JUDGE_PROMPT = (
    "source sentence: <{source}>, target sentence: <{target}>, generate sentence: "
    "<{generated}>. Please find the ambiguous word pairs in the source language "
    "sentence and the target language sentence, and count the number of ambiguous "
    "word pairs. Refer to the above word pairs to further count the accuracy of "
    "disambiguation in the generated sentences."
)

JUDGE_FORMAT_INSTRUCTION = (
    "Answer on a single line in exactly this format: pairs: <integer>, correct: <integer>"
)

JUDGE_RETRY_INSTRUCTION = (
    "Your previous answer could not be parsed. Reply with only one line in exactly "
    "this format: pairs: <integer>, correct: <integer>"
)

_PAIRS_RE = re.compile(r"pairs\s*[:=]\s*(\d+)", re.IGNORECASE)
_CORRECT_RE = re.compile(r"correct\s*[:=]\s*(\d+)", re.IGNORECASE)


def parse_judge_reply(reply: str) -> tuple[int, int]:
    """Extract (pairs found, correctly disambiguated) from a judge reply."""
    pairs_match = _PAIRS_RE.search(reply)
    correct_match = _CORRECT_RE.search(reply)
    if not pairs_match or not correct_match:
        raise JudgeError(f"unparseable judge reply: {reply[:120]!r}")
    found = int(pairs_match.group(1))
    correct = int(correct_match.group(1))
    if correct > found:
        raise JudgeError(
            f"judge reported correct={correct} > pairs={found}; invalid"
        )
    return found, correct


def gpt_judge(record: EvalRecord, judge_backend, cfg) -> tuple[int, int]:
    """Ask a judge model to count ambiguous pairs and correct disambiguations.

    One reformat retry is attempted on an unparseable reply; a reply with
    correct > found is invalid immediately.
    """
    from .prompts import RenderedPrompt

    base = JUDGE_PROMPT.format(
        source=record.source, target=record.reference, generated=record.hypothesis
    )
    prompt = RenderedPrompt(
        (("user", base + "\n" + JUDGE_FORMAT_INSTRUCTION),)
    )
    from .llmclient import complete

    exchange = complete(prompt, cfg, judge_backend)
    try:
        return parse_judge_reply(exchange.response_text)
    except JudgeError as exc:
        if "invalid" in str(exc):
            raise
        retry_prompt = RenderedPrompt(
            prompt.messages
            + (("assistant", exchange.response_text), ("user", JUDGE_RETRY_INSTRUCTION))
        )
        retry = complete(retry_prompt, cfg, judge_backend)
        return parse_judge_reply(retry.response_text)


@dataclass(frozen=True)
class ExternalScores:
    per_record: dict[int, float]  # line_no -> score scaled to 0-100
    by_domain: dict[str, float]


def external_score(
    records: list[EvalRecord], scorer_url: str, timeout: float = 60.0
) -> ExternalScores | None:
    """Delegate per-record scoring to an external endpoint.

    Posts (source, reference, hypothesis) triples to ``POST /score``,
    expects an array of reals in [0, 1], scales by 100, and averages per
    domain. Endpoint failures return None so the pipeline continues.
    """
    scorable = _scored(records)
    if not scorable:
        return None
    url = scorer_url.rstrip("/")
    if not url.endswith("/score"):
        url += "/score"
    body = [
        {"source": r.source, "reference": r.reference, "hypothesis": r.hypothesis}
        for r in scorable
    ]
    try:
        response = requests.post(url, json=body, timeout=timeout)
        response.raise_for_status()
        raw_scores = response.json()
    except (requests.RequestException, ValueError) as exc:
        log.warning("external scorer unavailable (%s); scores absent", exc)
        return None
    if not isinstance(raw_scores, list) or len(raw_scores) != len(scorable):
        log.warning("external scorer returned %d scores for %d records; ignored",
                    len(raw_scores) if isinstance(raw_scores, list) else -1,
                    len(scorable))
        return None
    per_record = {
        record.line_no: float(score) * 100.0
        for record, score in zip(scorable, raw_scores)
    }
    sums: dict[str, list[float]] = {}
    for record, score in zip(scorable, raw_scores):
        sums.setdefault(record.domain, []).append(float(score) * 100.0)
    by_domain = {domain: sum(vals) / len(vals) for domain, vals in sums.items()}
    return ExternalScores(per_record=per_record, by_domain=by_domain)


def score_records(
    records: list[EvalRecord],
    annotations: list[AnnotatedOccurrence] | None,
    language: str,
    mode: str = "lenient",
    comet: float | None = None,
    judge: tuple[int, int] | None = None,
) -> dict:
    """Assemble the structured score payload for one (template, domain) run."""
    domains = {r.domain for r in records}
    templates = {r.template for r in records}
    if len(domains) != 1 or len(templates) != 1:
        raise MetricError("score_records expects one (template, domain) run")
    bleu = corpus_bleu(records, language)
    payload = {
        "domain": next(iter(domains)),
        "template": next(iter(templates)),
        "bleu": bleu.score,
        "bleu_detail": {
            "ngram_precisions": list(bleu.ngram_precisions),
            "brevity_penalty": bleu.brevity_penalty,
            "hyp_len": bleu.hyp_len,
            "ref_len": bleu.ref_len,
        },
        "records": len(records),
        "errors": sum(1 for r in records if r.error),
    }
    if annotations is not None:
        result = disambiguation_accuracy(records, annotations, language, mode=mode)
        payload["disamb"] = {"m": result.m, "n": result.n, "accuracy": result.accuracy}
        payload["disamb_mode"] = mode
    if comet is not None:
        payload["comet"] = comet
    if judge is not None:
        payload["judge"] = {"found": judge[0], "correct": judge[1]}
    return payload


def write_scores(payload: dict, path) -> None:
    from pathlib import Path

    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_scores(path) -> dict:
    from pathlib import Path

    return json.loads(Path(path).read_text(encoding="utf-8"))
