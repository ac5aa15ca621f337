"""Chat-completion backends and the batched strategy runner.

Two backends ship: an OpenAI-compatible HTTP client (``POST
/v1/chat/completions``) and a deterministic dictionary mock for tests and
dry runs. ``run_strategy`` fans a domain's test set out over a bounded
thread pool, checkpoints every finished record to a JSON-lines file, and
restores input order in the returned list.
"""

from __future__ import annotations

import json
import logging
import os
import random
import re
import threading
import time
from concurrent.futures import FIRST_COMPLETED, ThreadPoolExecutor, wait
from dataclasses import dataclass
from pathlib import Path

import requests

from .corpus import SentencePair
from .metrics import EvalRecord
from .prompts import (
    DEFAULT_FEW_SHOT_K,
    FewShotExample,
    PromptCatalog,
    PromptContext,
    RenderedPrompt,
    TemplateId,
    default_catalog,
    extract_translation,
    sample_few_shot,
    template_id,
)

log = logging.getLogger(__name__)

API_KEY_ENV = "AMBIG_API_KEY"
API_BASE_ENV = "AMBIG_API_BASE"

RETRY_BACKOFF_SECONDS = (1.0, 4.0, 16.0)
RETRY_JITTER = 0.2
MAX_ATTEMPTS = 3

# Abort a run once more than this fraction of a domain's sentences fail.
MAX_FAILURE_FRACTION = 0.5


class BackendError(RuntimeError):
    pass


class AuthError(BackendError):
    """Credential rejected; never retried."""


class TransientError(BackendError):
    """Network hiccup or 5xx; retried with backoff."""


class RateLimitError(TransientError):
    pass


class TokenBudgetError(BackendError):
    pass


class RunAborted(RuntimeError):
    pass


@dataclass(frozen=True)
class GenerationConfig:
    temperature: float = 0.8
    top_p: float = 0.95
    max_input_tokens: int = 1024
    max_output_tokens: int = 1024
    model_name: str = "default"

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_input_tokens < 1 or self.max_output_tokens < 1:
            raise ValueError("token limits must be positive")

    @classmethod
    def for_template(cls, tid: str | TemplateId, **overrides) -> "GenerationConfig":
        """Defaults per strategy: few-shot templates get the 3000-token
        input budget, everything else 1024."""
        tid = template_id(tid)
        budget = 3000 if tid.base == "few_shot" else 1024
        overrides.setdefault("max_input_tokens", budget)
        return cls(**overrides)


@dataclass
class ChatExchange:
    request: RenderedPrompt
    response_text: str
    latency_ms: int
    backend: str
    attempt: int

    def __post_init__(self):
        if self.attempt < 1:
            raise ValueError("attempt must be >= 1")


_GENERIC_TOKEN = re.compile(r"[A-Za-z0-9]+|\S")


def estimate_tokens(text: str) -> int:
    """Language-agnostic token estimate: ASCII letter/digit runs count as
    one token, every other non-space character as one."""
    return len(_GENERIC_TOKEN.findall(text))


def prompt_token_estimate(prompt: RenderedPrompt) -> int:
    return sum(estimate_tokens(content) for _, content in prompt.messages)


@dataclass(frozen=True)
class MockRule:
    """Word-for-word dictionary translation for the deterministic mock."""

    dictionary: dict[str, str]
    fallback: str = "echo"  # echo unknown tokens, or drop them

    def __post_init__(self):
        if self.fallback not in ("echo", "drop"):
            raise ValueError(f"unknown fallback {self.fallback!r}")


class MockBackend:
    """Deterministic backend that dictionary-translates the source sentence.

    The source sentence is read from the last line of the conversation's
    first user message (where every catalog template places it).
    """

    name = "mock"

    def __init__(self, rule: MockRule):
        self.rule = rule

    def _source_sentence(self, messages: list[dict[str, str]]) -> str:
        for message in messages:
            if message["role"] == "user":
                lines = [l for l in message["content"].splitlines() if l.strip()]
                if lines:
                    return lines[-1]
                return ""
        return ""

    def send(self, messages: list[dict[str, str]], cfg: GenerationConfig) -> str:
        sentence = self._source_sentence(messages)
        out = []
        for token in _GENERIC_TOKEN.findall(sentence):
            translated = self.rule.dictionary.get(token)
            if translated is not None:
                out.append(translated)
            elif self.rule.fallback == "echo":
                out.append(token)
        return " ".join(out)


class OpenAIBackend:
    """Client for OpenAI-compatible chat-completion endpoints.

    The credential comes from the ``AMBIG_API_KEY`` environment variable
    only (never a CLI flag); the base URL from ``AMBIG_API_BASE`` or the
    constructor.
    """

    name = "openai"

    def __init__(
        self,
        base_url: str | None = None,
        timeout: float = 60.0,
        session: requests.Session | None = None,
    ):
        base = base_url or os.environ.get(API_BASE_ENV, "")
        if not base:
            raise BackendError(
                f"no endpoint configured; set {API_BASE_ENV} or pass base_url"
            )
        base = base.rstrip("/")
        if base.endswith("/v1"):
            self.url = base + "/chat/completions"
        else:
            self.url = base + "/v1/chat/completions"
        self.timeout = timeout
        self.session = session or requests.Session()

    def send(self, messages: list[dict[str, str]], cfg: GenerationConfig) -> str:
        body = {
            "model": cfg.model_name,
            "messages": messages,
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_output_tokens,
        }
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(API_KEY_ENV, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        try:
            response = self.session.post(
                self.url, json=body, headers=headers, timeout=self.timeout
            )
        except requests.RequestException as exc:
            raise TransientError(f"request failed: {exc}") from exc
        if response.status_code in (401, 403):
            raise AuthError(f"authentication failed (HTTP {response.status_code})")
        if response.status_code == 429:
            raise RateLimitError("rate limited (HTTP 429)")
        if response.status_code >= 500:
            raise TransientError(f"server error (HTTP {response.status_code})")
        if response.status_code != 200:
            raise BackendError(
                f"HTTP {response.status_code}: {response.text[:200]}"
            )
        try:
            payload = response.json()
            return payload["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendError(f"malformed completion response: {exc}") from exc


def complete(
    prompt: RenderedPrompt,
    cfg: GenerationConfig,
    backend,
    rng: random.Random | None = None,
    sleep=time.sleep,
) -> ChatExchange:
    """Send one conversation, retrying transient failures with backoff.

    Over-budget inputs are a hard error before any request goes out;
    nothing is ever silently truncated.
    """
    used = prompt_token_estimate(prompt)
    if used > cfg.max_input_tokens:
        raise TokenBudgetError(
            f"prompt is ~{used} tokens, over the max_input_tokens limit of "
            f"{cfg.max_input_tokens}"
        )
    rng = rng or random.Random()
    messages = prompt.to_chat()
    last_error: Exception | None = None
    for attempt in range(1, MAX_ATTEMPTS + 1):
        started = time.monotonic()
        try:
            text = backend.send(messages, cfg)
            latency = int((time.monotonic() - started) * 1000)
            return ChatExchange(
                request=prompt,
                response_text=text,
                latency_ms=latency,
                backend=backend.name,
                attempt=attempt,
            )
        except AuthError:
            raise
        except TransientError as exc:
            last_error = exc
            if attempt < MAX_ATTEMPTS:
                base_delay = RETRY_BACKOFF_SECONDS[attempt - 1]
                jitter = 1 + rng.uniform(-RETRY_JITTER, RETRY_JITTER)
                delay = base_delay * jitter
                log.warning(
                    "attempt %d/%d failed (%s); retrying in %.1fs",
                    attempt,
                    MAX_ATTEMPTS,
                    exc,
                    delay,
                )
                sleep(delay)
    raise TransientError(
        f"giving up after {MAX_ATTEMPTS} attempts: {last_error}"
    ) from last_error


def _context_for(
    pair: SentencePair,
    tid: TemplateId,
    target_language: str,
    domain_display: str | None,
    word_tags: dict[int, str] | None,
    examples,
    domain_choices: list[str] | None,
) -> PromptContext:
    return PromptContext(
        source_sentence=pair.source_text,
        target_language=target_language,
        domain=domain_display,
        word_domain_tags=word_tags,
        few_shot_examples=examples,
        source_tokens=list(pair.source_tokens),
        domain_choices=domain_choices,
    )


def _translate_one(
    pair: SentencePair,
    tid: TemplateId,
    ctx: PromptContext,
    cfg: GenerationConfig,
    backend,
    catalog: PromptCatalog,
    sleep,
) -> tuple[str, list[ChatExchange]]:
    exchanges: list[ChatExchange] = []
    first = complete(catalog.render(tid, ctx), cfg, backend, sleep=sleep)
    exchanges.append(first)
    if tid.base == "reflection":
        ctx.prior_hypothesis = extract_translation(first.response_text) or " "
        second = complete(
            catalog.build_reflection_turns(tid, ctx), cfg, backend, sleep=sleep
        )
        exchanges.append(second)
    hypothesis = extract_translation(exchanges[-1].response_text)
    return hypothesis, exchanges


def run_strategy(
    dataset: list[SentencePair],
    template: str | TemplateId,
    cfg: GenerationConfig,
    backend,
    parallelism: int = 1,
    *,
    target_language: str,
    domain_display: str | None = None,
    word_tags_by_line: dict[int, dict[int, str]] | None = None,
    few_shot_pool: list[SentencePair] | None = None,
    few_shot_seed: int = 0,
    few_shot_k: int = DEFAULT_FEW_SHOT_K,
    domain_display_map: dict[str, str] | None = None,
    domain_choices: list[str] | None = None,
    catalog: PromptCatalog | None = None,
    checkpoint_path: str | Path | None = None,
    sleep=time.sleep,
) -> list[EvalRecord]:
    """Translate one domain's test set with one strategy.

    Keeps at most ``parallelism`` requests in flight, appends every
    finished record to ``checkpoint_path`` (resuming skips line numbers
    already there), and returns records in input order. Per-sentence
    backend failures are recorded on the record and the run continues;
    it aborts only once more than half the domain has failed.
    """
    if not dataset:
        raise ValueError("dataset is empty")
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    tid = template_id(template)
    catalog = catalog or default_catalog()
    domains = {pair.domain for pair in dataset}
    if len(domains) != 1:
        raise ValueError(f"dataset spans multiple domains: {sorted(domains)}")
    domain = next(iter(domains))

    done: dict[int, EvalRecord] = {}
    if checkpoint_path is not None and Path(checkpoint_path).exists():
        # errored lines are retried on resume; only clean records are kept,
        # and a torn final line from an interrupted run is dropped
        for record in read_run_file(checkpoint_path, tolerant=True):
            if record.error is None:
                done[record.line_no] = record
        if done:
            log.info("resuming: %d records already checkpointed", len(done))

    checkpoint_lock = threading.Lock()

    def checkpoint(record: EvalRecord) -> None:
        if checkpoint_path is None:
            return
        with checkpoint_lock:
            with open(checkpoint_path, "a", encoding="utf-8") as fh:
                fh.write(_record_to_json(record) + "\n")

    def work(pair: SentencePair) -> EvalRecord:
        word_tags = None
        if tid.id == "T6":
            word_tags = (word_tags_by_line or {}).get(pair.line_no) or {}
        examples = None
        if tid.base == "few_shot":
            pool = few_shot_pool or []
            examples = sample_few_shot(
                pool,
                k=few_shot_k,
                seed=f"{few_shot_seed}:{pair.line_no}",
                domain=domain if tid.id == "T9" else None,
            )
            if domain_display_map:
                examples = [
                    FewShotExample(
                        source=example.source,
                        target=example.target,
                        domain=domain_display_map.get(example.domain, example.domain),
                    )
                    for example in examples
                ]
        ctx = _context_for(
            pair, tid, target_language, domain_display, word_tags, examples, domain_choices
        )
        try:
            hypothesis, exchanges = _translate_one(
                pair, tid, ctx, cfg, backend, catalog, sleep
            )
            error = None if hypothesis else "empty model reply"
        except BackendError as exc:
            hypothesis, exchanges, error = "", [], str(exc)
        record = EvalRecord(
            line_no=pair.line_no,
            domain=pair.domain,
            template=tid.id,
            source=pair.source_text,
            reference=pair.target_text,
            hypothesis=hypothesis if error is None else "",
            exchanges=exchanges,
            error=error,
        )
        checkpoint(record)
        return record

    pending = [pair for pair in dataset if pair.line_no not in done]
    failures = sum(1 for record in done.values() if record.error)
    abort_after = len(dataset) * MAX_FAILURE_FRACTION

    with ThreadPoolExecutor(max_workers=parallelism) as executor:
        futures = {executor.submit(work, pair): pair for pair in pending}
        remaining = set(futures)
        while remaining:
            finished, remaining = wait(remaining, return_when=FIRST_COMPLETED)
            for future in finished:
                record = future.result()
                done[record.line_no] = record
                if record.error:
                    failures += 1
                    if failures > abort_after:
                        for other in remaining:
                            other.cancel()
                        raise RunAborted(
                            f"{failures}/{len(dataset)} sentences failed in domain "
                            f"{domain!r}; aborting run"
                        )

    return [done[pair.line_no] for pair in dataset]


def _record_to_json(record: EvalRecord) -> str:
    # latency is wall-clock noise, deliberately not serialized: artifacts
    # must be byte-identical across reruns with the mock backend
    payload = {
        "line_no": record.line_no,
        "domain": record.domain,
        "template": record.template,
        "source": record.source,
        "reference": record.reference,
        "hypothesis": record.hypothesis,
        "exchanges": [
            {
                "messages": [list(m) for m in ex.request.messages],
                "response_text": ex.response_text,
                "backend": ex.backend,
                "attempt": ex.attempt,
            }
            for ex in record.exchanges
        ],
    }
    if record.error is not None:
        payload["error"] = record.error
    return json.dumps(payload, ensure_ascii=False, sort_keys=True)


def write_run_file(records: list[EvalRecord], path: str | Path) -> None:
    """Write records sorted by line number; byte-deterministic."""
    ordered = sorted(records, key=lambda r: r.line_no)
    with open(path, "w", encoding="utf-8") as fh:
        for record in ordered:
            fh.write(_record_to_json(record) + "\n")


def read_run_file(path: str | Path, tolerant: bool = False) -> list[EvalRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError:
                if tolerant:
                    log.warning("%s line %d: malformed record skipped", path, line_no)
                    continue
                raise
            exchanges = [
                ChatExchange(
                    request=RenderedPrompt(
                        tuple((role, content) for role, content in ex["messages"])
                    ),
                    response_text=ex["response_text"],
                    latency_ms=0,
                    backend=ex["backend"],
                    attempt=ex["attempt"],
                )
                for ex in raw.get("exchanges", [])
            ]
            records.append(
                EvalRecord(
                    line_no=raw["line_no"],
                    domain=raw["domain"],
                    template=raw["template"],
                    source=raw["source"],
                    reference=raw["reference"],
                    hypothesis=raw["hypothesis"],
                    exchanges=exchanges,
                    error=raw.get("error"),
                )
            )
    return records


def load_mock_rule(spec: dict) -> MockRule:
    """Build a MockRule from a config mapping (inline dict or file path)."""
    dictionary = spec.get("dictionary", {})
    if isinstance(dictionary, str):
        dictionary = json.loads(Path(dictionary).read_text(encoding="utf-8"))
    return MockRule(dictionary=dict(dictionary), fallback=spec.get("fallback", "echo"))
