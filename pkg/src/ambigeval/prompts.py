"""Prompt strategies T1-T10 rendered to chat message sequences.

T1-T4 are the base strategies (zero-shot, chain-of-thought, few-shot,
reflection); T5-T10 add domain information in six distinct ways. The
wordings live in a versioned catalog shipped with the package so renders
are byte-stable; ``PromptCatalog.checksum()`` fingerprints the file.
"""

from __future__ import annotations

import hashlib
import json
import logging
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from string import Template

log = logging.getLogger(__name__)


class PromptError(ValueError):
    pass


@dataclass(frozen=True)
class TemplateId:
    id: str
    base: str
    domain_info: str


# The only legal (base, domain info) combinations.
TEMPLATE_IDS: dict[str, TemplateId] = {
    "T1": TemplateId("T1", "zero_shot", "none"),
    "T2": TemplateId("T2", "cot", "none"),
    "T3": TemplateId("T3", "few_shot", "none"),
    "T4": TemplateId("T4", "reflection", "none"),
    "T5": TemplateId("T5", "zero_shot", "sentence_tag"),
    "T6": TemplateId("T6", "zero_shot", "word_tags"),
    "T7": TemplateId("T7", "cot", "tag_in_step2"),
    "T8": TemplateId("T8", "cot", "auto_discriminate"),
    "T9": TemplateId("T9", "few_shot", "tagged_examples"),
    "T10": TemplateId("T10", "reflection", "tag_in_reflection"),
}

# Disambiguation template -> the base template it is compared against.
BASE_PAIRING: dict[str, str] = {
    "T5": "T1",
    "T6": "T1",
    "T7": "T2",
    "T8": "T2",
    "T9": "T3",
    "T10": "T4",
}

DEFAULT_FEW_SHOT_K = 5


def template_id(tid: str | TemplateId) -> TemplateId:
    if isinstance(tid, TemplateId):
        return tid
    try:
        return TEMPLATE_IDS[tid]
    except KeyError:
        raise PromptError(f"unknown template {tid!r}; expected T1..T10") from None


@dataclass(frozen=True)
class FewShotExample:
    source: str
    target: str
    domain: str | None = None


@dataclass
class PromptContext:
    """Everything a template may need; which fields are required depends on the id."""

    source_sentence: str
    target_language: str
    domain: str | None = None
    word_domain_tags: dict[int, str] | None = None
    few_shot_examples: list[FewShotExample] | None = None
    prior_hypothesis: str | None = None
    # tokens matching word_domain_tags indices; falls back to whitespace split
    source_tokens: list[str] | None = None
    # closed domain list shown to the model by T8
    domain_choices: list[str] | None = None


@dataclass(frozen=True)
class RenderedPrompt:
    messages: tuple[tuple[str, str], ...]  # (role, content)

    def __post_init__(self):
        if not self.messages:
            raise PromptError("a rendered prompt needs at least one message")
        if self.messages[-1][0] != "user":
            raise PromptError("the last message must have role 'user'")

    def to_chat(self) -> list[dict[str, str]]:
        return [{"role": role, "content": content} for role, content in self.messages]

    @property
    def user_content(self) -> str:
        return self.messages[-1][1]

    def text(self) -> str:
        return "\n".join(content for _, content in self.messages)


_REQUIRED_FIELDS: dict[str, tuple[str, ...]] = {
    "T3": ("few_shot_examples",),
    "T5": ("domain",),
    "T6": ("domain", "word_domain_tags"),
    "T7": ("domain",),
    "T8": ("domain_choices",),
    "T9": ("domain", "few_shot_examples"),
    "T10": ("domain",),
}


class PromptCatalog:
    """Template wordings loaded from the shipped (or a custom) catalog file."""

    def __init__(self, spec: dict, raw_bytes: bytes):
        self.spec = spec
        self._raw = raw_bytes
        self.system_message: str = spec.get("system_message", "")
        self.templates: dict[str, dict] = spec["templates"]
        for tid in TEMPLATE_IDS:
            if tid not in self.templates:
                raise PromptError(f"catalog is missing template {tid}")

    @classmethod
    def load(cls, path: str | Path | None = None) -> "PromptCatalog":
        if path is None:
            raw = resources.files("ambigeval.data").joinpath("templates.json").read_bytes()
        else:
            raw = Path(path).read_bytes()
        return cls(json.loads(raw.decode("utf-8")), raw)

    def checksum(self) -> str:
        return hashlib.sha256(self._raw).hexdigest()

    def without_system_message(self) -> "PromptCatalog":
        spec = dict(self.spec)
        spec["system_message"] = ""
        return PromptCatalog(spec, self._raw)

    def _check_context(self, tid: TemplateId, ctx: PromptContext) -> None:
        for field_name in _REQUIRED_FIELDS.get(tid.id, ()):
            value = getattr(ctx, field_name)
            # an empty tag map is legal (a sentence may have nothing to tag);
            # an empty example list is not
            missing = value is None or (
                field_name != "word_domain_tags" and not value
            )
            if missing:
                raise PromptError(f"{tid.id} requires {field_name}")
        if tid.id == "T9":
            for example in ctx.few_shot_examples or []:
                if not example.domain:
                    raise PromptError("T9 requires a domain on every few-shot example")

    def _examples_block(self, tid: TemplateId, ctx: PromptContext) -> str:
        skeleton = Template(self.templates[tid.id]["example"])
        lines = []
        for example in ctx.few_shot_examples or []:
            lines.append(
                skeleton.substitute(
                    example_source=example.source,
                    example_target=example.target,
                    example_domain=example.domain or "",
                )
            )
        return "\n".join(lines)

    def _tagged_sentence(self, ctx: PromptContext) -> str:
        tokens = ctx.source_tokens or ctx.source_sentence.split()
        tags = ctx.word_domain_tags or {}
        rendered = [
            f"{token}({tags[i]})" if i in tags else token
            for i, token in enumerate(tokens)
        ]
        return " ".join(rendered)

    def _user_message(self, tid: TemplateId, ctx: PromptContext) -> str:
        entry = self.templates[tid.id]
        if tid.base == "reflection":
            # turn 1 of a reflection template is its zero-shot counterpart
            return self._user_message(template_id(entry["turn1"]), ctx)
        slots = {
            "source_sentence": ctx.source_sentence,
            "target_language": ctx.target_language,
            "domain": ctx.domain or "",
        }
        if tid.base == "few_shot":
            slots["examples_block"] = self._examples_block(tid, ctx)
        if tid.id == "T6":
            slots["tagged_sentence"] = self._tagged_sentence(ctx)
        if tid.id == "T8":
            slots["domain_list"] = ", ".join(ctx.domain_choices or [])
        return Template(entry["user"]).substitute(slots)

    def render(self, tid: str | TemplateId, ctx: PromptContext) -> RenderedPrompt:
        """Render the template's first (and for T1-T3/T5-T9 only) turn."""
        tid = template_id(tid)
        self._check_context(tid, ctx)
        messages: list[tuple[str, str]] = []
        if self.system_message:
            messages.append(("system", self.system_message))
        messages.append(("user", self._user_message(tid, ctx)))
        return RenderedPrompt(tuple(messages))

    def build_reflection_turns(
        self, tid: str | TemplateId, ctx: PromptContext
    ) -> RenderedPrompt:
        """Second-turn conversation for T4/T10: turn-1 prompt, the model's
        prior hypothesis as an assistant message, then the reflection
        instruction (which names the domain for T10)."""
        tid = template_id(tid)
        if tid.base != "reflection":
            raise PromptError(f"{tid.id} is not a reflection template")
        if not ctx.prior_hypothesis:
            raise PromptError(f"{tid.id} reflection turn requires prior_hypothesis")
        self._check_context(tid, ctx)
        reflect = Template(self.templates[tid.id]["reflect"]).substitute(
            domain=ctx.domain or ""
        )
        turn1 = self.render(tid, ctx)
        messages = turn1.messages + (
            ("assistant", ctx.prior_hypothesis),
            ("user", reflect),
        )
        return RenderedPrompt(messages)


_default_catalog: PromptCatalog | None = None


def default_catalog() -> PromptCatalog:
    global _default_catalog
    if _default_catalog is None:
        _default_catalog = PromptCatalog.load()
    return _default_catalog


def render(tid: str | TemplateId, ctx: PromptContext) -> RenderedPrompt:
    return default_catalog().render(tid, ctx)


def build_reflection_turns(tid: str | TemplateId, ctx: PromptContext) -> RenderedPrompt:
    return default_catalog().build_reflection_turns(tid, ctx)


def sample_few_shot(
    datastore, k: int = DEFAULT_FEW_SHOT_K, seed: int | str = 0, domain: str | None = None
) -> list[FewShotExample]:
    """Uniformly sample ``k`` translation examples without replacement.

    ``datastore`` is a sequence of train sentence pairs; with ``domain``
    given the pool is restricted to that domain. The draw uses
    ``random.Random(seed).sample`` over pool positions, so a fixed seed
    replays exactly. A pool smaller than ``k`` is returned whole with a
    warning.
    """
    if k < 1:
        raise PromptError(f"k must be >= 1, got {k}")
    pool = [p for p in datastore if domain is None or p.domain == domain]
    if not pool:
        raise PromptError("few-shot datastore is empty")
    if len(pool) < k:
        log.warning("few-shot pool has %d < k=%d examples; using all", len(pool), k)
        indices = list(range(len(pool)))
    else:
        indices = random.Random(seed).sample(range(len(pool)), k)
    return [
        FewShotExample(
            source=pool[i].source_text, target=pool[i].target_text, domain=pool[i].domain
        )
        for i in indices
    ]


_ANSWER_MARK = re.compile(r"^\s*(?:final\s+)?translation\s*[::]\s*(.+)$", re.IGNORECASE)
_STEP_PREFIX = re.compile(r"^\s*step\s*\d+\s*[::]\s*", re.IGNORECASE)


def extract_translation(reply: str) -> str:
    """Pull the final translation out of a model reply.

    A marked answer line ("Translation: ...") wins, taking the last such
    marker; otherwise chain-of-thought scaffolding ("Step N:" prefixes) is
    stripped and the last nonempty line is used.
    """
    marked = None
    for line in reply.splitlines():
        match = _ANSWER_MARK.match(line)
        if match:
            marked = match.group(1).strip()
    if marked:
        return marked
    candidate = ""
    for line in reply.splitlines():
        line = _STEP_PREFIX.sub("", line).strip()
        if line:
            candidate = line
    return candidate
