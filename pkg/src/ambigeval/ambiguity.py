"""Cross-domain ambiguous vocabularies and test-set annotation.

A source word is ambiguous for domain d when some other domain translates
it to at least one target word d does not use. The entry keeps the word's
in-domain translation set and the cross-domain distractors, each tagged
with its origin domain.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .corpus import SentencePair
from .lexicon import DomainLexicon, normalize_token


class AmbiguityError(ValueError):
    pass


@dataclass(frozen=True)
class AmbiguousEntry:
    source_word: str
    in_domain_translations: frozenset[str]
    # (target word, origin domain id); disjoint from the in-domain set
    distractor_translations: frozenset[tuple[str, str]]

    def __post_init__(self):
        if not self.in_domain_translations:
            raise AmbiguityError(f"{self.source_word!r}: empty in-domain set")
        if not self.distractor_translations:
            raise AmbiguityError(f"{self.source_word!r}: empty distractor set")
        overlap = self.in_domain_translations & {
            word for word, _ in self.distractor_translations
        }
        if overlap:
            raise AmbiguityError(
                f"{self.source_word!r}: distractors overlap in-domain set: {sorted(overlap)}"
            )

    @property
    def distractor_words(self) -> frozenset[str]:
        return frozenset(word for word, _ in self.distractor_translations)


@dataclass
class AmbiguousVocabulary:
    domain: str
    entries: dict[str, AmbiguousEntry]


@dataclass(frozen=True)
class AnnotatedOccurrence:
    line_no: int
    token_index: int
    source_word: str
    expected: frozenset[str]
    distractors: frozenset[str]


@dataclass(frozen=True)
class AmbiguityStats:
    occurrences: int
    distinct_words: int
    sentences: int


def build_ambiguous_vocabulary(
    lexicons: dict[str, DomainLexicon],
) -> dict[str, AmbiguousVocabulary]:
    """Apply the cross-domain set-difference rule to every (domain, word).

    For domain d and source word s with translation set T_d(s): s is
    ambiguous for d iff some other domain d' has s with T_d'(s) \\ T_d(s)
    nonempty; the distractors are the union of those differences, tagged
    with their origin domains. Comparison is on translation sets; lexicon
    counts are ignored here.
    """
    if len(lexicons) < 2:
        raise AmbiguityError("ambiguity undefined for a single domain")
    vocabularies: dict[str, AmbiguousVocabulary] = {}
    for domain, lex in lexicons.items():
        entries: dict[str, AmbiguousEntry] = {}
        for source, targets in lex.entries.items():
            in_domain = frozenset(targets)
            distractors: set[tuple[str, str]] = set()
            for other_domain, other_lex in lexicons.items():
                if other_domain == domain:
                    continue
                other_targets = other_lex.entries.get(source)
                if not other_targets:
                    continue
                for word in set(other_targets) - in_domain:
                    distractors.add((word, other_domain))
            if distractors:
                entries[source] = AmbiguousEntry(
                    source_word=source,
                    in_domain_translations=in_domain,
                    distractor_translations=frozenset(distractors),
                )
        vocabularies[domain] = AmbiguousVocabulary(domain=domain, entries=entries)
    return vocabularies


def annotate_test_set(
    pairs: list[SentencePair],
    vocab: AmbiguousVocabulary,
    casefold: bool = True,
) -> list[AnnotatedOccurrence]:
    """Mark every token position whose normalized form is a vocab key.

    Repeated occurrences of one word within a sentence yield one record
    per position.
    """
    occurrences = []
    for pair in pairs:
        if pair.domain != vocab.domain:
            raise AmbiguityError(
                f"vocabulary is for domain {vocab.domain!r} but pair is from "
                f"{pair.domain!r}"
            )
        for index, token in enumerate(pair.source_tokens):
            key = normalize_token(token, casefold)
            entry = vocab.entries.get(key)
            if entry is None:
                continue
            occurrences.append(
                AnnotatedOccurrence(
                    line_no=pair.line_no,
                    token_index=index,
                    source_word=key,
                    expected=entry.in_domain_translations,
                    distractors=entry.distractor_words,
                )
            )
    return occurrences


def ambiguity_stats(
    annotations: dict[str, list[AnnotatedOccurrence]],
) -> dict[str, AmbiguityStats]:
    """Per-domain occurrence / distinct-word / sentence counts."""
    stats = {}
    for domain, occurrences in annotations.items():
        stats[domain] = AmbiguityStats(
            occurrences=len(occurrences),
            distinct_words=len({occ.source_word for occ in occurrences}),
            sentences=len({occ.line_no for occ in occurrences}),
        )
    return stats


def write_vocabulary(vocab: AmbiguousVocabulary, path: str | Path) -> None:
    payload = {
        "domain": vocab.domain,
        "entries": [
            {
                "source": entry.source_word,
                "in_domain": sorted(entry.in_domain_translations),
                "distractors": [
                    {"word": word, "origin": origin}
                    for word, origin in sorted(entry.distractor_translations)
                ],
            }
            for entry in (vocab.entries[key] for key in sorted(vocab.entries))
        ],
    }
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def read_vocabulary(path: str | Path) -> AmbiguousVocabulary:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    entries = {}
    for raw in payload["entries"]:
        entries[raw["source"]] = AmbiguousEntry(
            source_word=raw["source"],
            in_domain_translations=frozenset(raw["in_domain"]),
            distractor_translations=frozenset(
                (d["word"], d["origin"]) for d in raw["distractors"]
            ),
        )
    return AmbiguousVocabulary(domain=payload["domain"], entries=entries)


def write_annotations(
    occurrences: list[AnnotatedOccurrence], path: str | Path
) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for occ in occurrences:
            record = {
                "line_no": occ.line_no,
                "token_index": occ.token_index,
                "source_word": occ.source_word,
                "expected": sorted(occ.expected),
                "distractors": sorted(occ.distractors),
            }
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def read_annotations(path: str | Path) -> list[AnnotatedOccurrence]:
    occurrences = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            occurrences.append(
                AnnotatedOccurrence(
                    line_no=raw["line_no"],
                    token_index=raw["token_index"],
                    source_word=raw["source_word"],
                    expected=frozenset(raw["expected"]),
                    distractors=frozenset(raw["distractors"]),
                )
            )
    return occurrences
