"""Per-domain bilingual lexicons built from word-aligned training pairs."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import AlignmentLink, SentencePair, is_punctuation_token

# Below this count an aligned pair is treated as alignment noise when
# building ambiguity vocabularies; raw exports keep everything.
DEFAULT_MIN_COUNT = 2


def normalize_token(token: str, casefold: bool = True) -> str:
    """NFC-normalize a token, lowercasing it when ``casefold`` is set.

    This is the single notion of word identity shared by lexicon
    construction, ambiguity vocabularies, test-set annotation, and the
    disambiguation metric.
    """
    token = unicodedata.normalize("NFC", token)
    return token.lower() if casefold else token


@dataclass(frozen=True)
class BilingualEntry:
    source_word: str
    target_word: str
    count: int = 1

    def __post_init__(self):
        if self.count < 1:
            raise ValueError(f"count must be >= 1, got {self.count}")


@dataclass
class DomainLexicon:
    """Map of source word -> {target word -> count} for one domain."""

    domain: str
    entries: dict[str, dict[str, int]] = field(default_factory=dict)

    def total_count(self) -> int:
        return sum(c for targets in self.entries.values() for c in targets.values())

    def pair_count(self) -> int:
        return sum(len(targets) for targets in self.entries.values())

    def copy(self) -> "DomainLexicon":
        return DomainLexicon(
            self.domain, {s: dict(t) for s, t in self.entries.items()}
        )


def extract_pairs(
    pair: SentencePair, links: list[AlignmentLink] | tuple[AlignmentLink, ...],
    casefold: bool = True,
) -> list[BilingualEntry]:
    """One count-1 entry per alignment link; duplicates preserved."""
    entries = []
    for link in links:
        entries.append(
            BilingualEntry(
                source_word=normalize_token(pair.source_tokens[link.src_index], casefold),
                target_word=normalize_token(pair.target_tokens[link.tgt_index], casefold),
            )
        )
    return entries


def build_domain_lexicon(entries: list[BilingualEntry], domain: str) -> DomainLexicon:
    """Merge entries by (source, target), summing counts.

    Order-independent: any permutation of ``entries`` yields an equal
    lexicon.
    """
    lex = DomainLexicon(domain)
    for entry in entries:
        targets = lex.entries.setdefault(entry.source_word, {})
        targets[entry.target_word] = targets.get(entry.target_word, 0) + entry.count
    return lex


def filter_lexicon(
    lex: DomainLexicon,
    min_count: int = 1,
    stopwords: set[str] | frozenset[str] = frozenset(),
) -> DomainLexicon:
    """Drop low-count pairs and stopword/punctuation source words.

    Idempotent for fixed parameters; source keys left with no targets are
    removed.
    """
    if min_count < 1:
        raise ValueError(f"min_count must be >= 1, got {min_count}")
    out = DomainLexicon(lex.domain)
    for source, targets in lex.entries.items():
        if source in stopwords or is_punctuation_token(source):
            continue
        kept = {t: c for t, c in targets.items() if c >= min_count}
        if kept:
            out.entries[source] = kept
    return out


def write_lexicon_tsv(lex: DomainLexicon, path: str | Path) -> None:
    """Export as ``domain<TAB>source<TAB>target<TAB>count`` rows.

    Rows are sorted by (source, descending count, target) so exports are
    byte-deterministic.
    """
    rows = []
    for source, targets in lex.entries.items():
        for target, count in targets.items():
            rows.append((source, -count, target))
    rows.sort()
    with open(path, "w", encoding="utf-8") as fh:
        for source, neg_count, target in rows:
            fh.write(f"{lex.domain}\t{source}\t{target}\t{-neg_count}\n")


def read_lexicon_tsv(path: str | Path) -> dict[str, DomainLexicon]:
    """Read a lexicon TSV; returns lexicons keyed by domain id."""
    lexicons: dict[str, DomainLexicon] = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 4:
                raise ValueError(f"{path} line {line_no}: expected 4 TSV columns")
            domain, source, target, count = parts
            lex = lexicons.setdefault(domain, DomainLexicon(domain))
            targets = lex.entries.setdefault(source, {})
            targets[target] = targets.get(target, 0) + int(count)
    return lexicons
