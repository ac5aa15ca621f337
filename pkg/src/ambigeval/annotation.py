"""Human review of aligned word pairs: sampling, judgments, accuracy, refinement.

Judgments are journaled to a JSON-lines file (one event per line) and
replayed at startup; re-judging an item replaces the annotator's active
label but every event stays in the history.
"""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import dataclass, replace
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .ambiguity import AmbiguousVocabulary
from .lexicon import DomainLexicon

log = logging.getLogger(__name__)

LABELS = ("correct", "partially_correct", "incorrect")
ACTIONS = ("keep", "remove")


class AnnotationError(ValueError):
    pass


@dataclass(frozen=True)
class ReviewItem:
    item_id: str
    domain: str
    source_word: str
    target_word: str
    example_lines: tuple[int, ...] = ()
    status: str = "pending"


@dataclass(frozen=True)
class Judgment:
    item_id: str
    label: str
    annotator: str
    ts: float  # UTC epoch seconds


@dataclass(frozen=True)
class RefinementAction:
    domain: str
    source_word: str
    target_word: str
    action: str

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise AnnotationError(f"unknown action {self.action!r}")


@dataclass(frozen=True)
class DomainAccuracy:
    counts: dict[str, int]
    total: int

    def proportion(self, label: str) -> float:
        return self.counts[label] / self.total

    def percentages(self) -> dict[str, int]:
        """Label -> integer percentage (half-up), for display."""
        return {
            label: int(
                (Decimal(self.counts[label]) * 100 / Decimal(self.total)).quantize(
                    Decimal("1"), rounding=ROUND_HALF_UP
                )
            )
            for label in LABELS
        }


def enqueue_samples(
    lexicons: dict[str, DomainLexicon],
    sample_size: int,
    seed: int,
    examples: dict[tuple[str, str, str], tuple[int, ...]] | None = None,
) -> list[ReviewItem]:
    """Draw up to ``sample_size`` word pairs per domain for review.

    The draw is uniform without replacement over the domain's (source,
    target) pairs sorted lexicographically, using ``random.Random(f"{seed}:{domain}")``,
    so a fixed seed replays exactly. ``examples`` optionally maps
    (domain, source, target) to training line numbers to show reviewers.
    """
    if sample_size < 1:
        raise AnnotationError(f"sample_size must be >= 1, got {sample_size}")
    items: list[ReviewItem] = []
    for domain in sorted(lexicons):
        lex = lexicons[domain]
        population = sorted(
            (source, target)
            for source, targets in lex.entries.items()
            for target in targets
        )
        if not population:
            log.warning("domain %s: empty lexicon, nothing to sample", domain)
            continue
        rng = random.Random(f"{seed}:{domain}")
        drawn = rng.sample(population, min(sample_size, len(population)))
        for source, target in drawn:
            refs = ()
            if examples:
                refs = examples.get((domain, source, target), ())
            items.append(
                ReviewItem(
                    item_id=f"{domain}:{source}:{target}",
                    domain=domain,
                    source_word=source,
                    target_word=target,
                    example_lines=tuple(refs),
                )
            )
    return items


def find_example_lines(
    train_pairs, source_word: str, target_word: str, limit: int = 3, casefold: bool = True
) -> tuple[int, ...]:
    """Line numbers of up to ``limit`` training sentences containing the pair."""
    from .lexicon import normalize_token

    lines = []
    for pair in train_pairs:
        src = {normalize_token(t, casefold) for t in pair.source_tokens}
        tgt = {normalize_token(t, casefold) for t in pair.target_tokens}
        if source_word in src and target_word in tgt:
            lines.append(pair.line_no)
            if len(lines) >= limit:
                break
    return tuple(lines)


class JudgmentStore:
    """Review items plus journaled judgments.

    Writes are serialized through a single lock so the journal is a total
    order; reads take the same lock briefly and return snapshots.
    """

    def __init__(self, journal_path: str | Path, items: list[ReviewItem] | None = None):
        self._journal_path = Path(journal_path)
        self._lock = threading.Lock()
        self._items: dict[str, ReviewItem] = {it.item_id: it for it in (items or [])}
        self._active: dict[tuple[str, str], Judgment] = {}
        self._history: list[Judgment] = []
        if self._journal_path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self._journal_path, encoding="utf-8") as fh:
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line)
                except json.JSONDecodeError:
                    # torn write from an interrupted process; keep the rest
                    log.warning(
                        "%s line %d: malformed journal event skipped",
                        self._journal_path,
                        line_no,
                    )
                    continue
                judgment = Judgment(
                    item_id=raw["item_id"],
                    label=raw["label"],
                    annotator=raw["annotator"],
                    ts=raw["ts"],
                )
                self._apply(judgment)

    def _apply(self, judgment: Judgment) -> None:
        self._history.append(judgment)
        self._active[(judgment.item_id, judgment.annotator)] = judgment
        item = self._items.get(judgment.item_id)
        if item is not None and item.status != "judged":
            self._items[judgment.item_id] = replace(item, status="judged")

    def add_items(self, items: list[ReviewItem]) -> None:
        with self._lock:
            for item in items:
                self._items.setdefault(item.item_id, item)

    def items(self, domain: str | None = None, status: str | None = None) -> list[ReviewItem]:
        with self._lock:
            values = list(self._items.values())
        if domain:
            values = [it for it in values if it.domain == domain]
        if status:
            values = [it for it in values if it.status == status]
        # pending first, then stable by id
        values.sort(key=lambda it: (it.status != "pending", it.item_id))
        return values

    def record_judgment(
        self, item_id: str, label: str, annotator: str, ts: float | None = None
    ) -> Judgment:
        """Persist a judgment; same-annotator re-judgments replace the label."""
        if label not in LABELS:
            raise AnnotationError(
                f"unknown label {label!r}; expected one of {', '.join(LABELS)}"
            )
        with self._lock:
            if item_id not in self._items:
                raise KeyError(f"unknown item_id {item_id!r}")
            judgment = Judgment(
                item_id=item_id,
                label=label,
                annotator=annotator,
                ts=time.time() if ts is None else ts,
            )
            with open(self._journal_path, "a", encoding="utf-8") as fh:
                fh.write(
                    json.dumps(
                        {
                            "ts": judgment.ts,
                            "item_id": judgment.item_id,
                            "label": judgment.label,
                            "annotator": judgment.annotator,
                        },
                        ensure_ascii=False,
                        sort_keys=True,
                    )
                    + "\n"
                )
            self._apply(judgment)
            return judgment

    def active_judgments(self) -> list[Judgment]:
        with self._lock:
            return sorted(self._active.values(), key=lambda j: (j.item_id, j.annotator))

    def history_count(self) -> int:
        with self._lock:
            return len(self._history)

    def item(self, item_id: str) -> ReviewItem:
        with self._lock:
            return self._items[item_id]

    def item_domains(self) -> dict[str, str]:
        with self._lock:
            return {item_id: item.domain for item_id, item in self._items.items()}


def alignment_accuracy(
    judgments: list[Judgment],
    item_domains: dict[str, str],
    adjudication: str = "separate",
) -> dict[str, DomainAccuracy]:
    """Per-domain correct / partially-correct / incorrect proportions.

    ``adjudication="separate"`` counts each (item, annotator) judgment;
    ``"majority"`` resolves each item to its majority label (latest
    timestamp breaks ties). Domains with zero judgments are excluded with
    a warning.
    """
    if adjudication == "majority":
        by_item: dict[str, list[Judgment]] = {}
        for judgment in judgments:
            by_item.setdefault(judgment.item_id, []).append(judgment)
        resolved = []
        for item_id, group in by_item.items():
            tally: dict[str, int] = {}
            for j in group:
                tally[j.label] = tally.get(j.label, 0) + 1
            best = max(tally.values())
            tied = {label for label, n in tally.items() if n == best}
            winner = max(
                (j for j in group if j.label in tied), key=lambda j: j.ts
            )
            resolved.append(winner)
        judgments = resolved
    elif adjudication != "separate":
        raise AnnotationError(f"unknown adjudication mode {adjudication!r}")

    counts: dict[str, dict[str, int]] = {}
    for judgment in judgments:
        domain = item_domains.get(judgment.item_id)
        if domain is None:
            log.warning("judgment for unknown item %s skipped", judgment.item_id)
            continue
        domain_counts = counts.setdefault(domain, {label: 0 for label in LABELS})
        domain_counts[judgment.label] += 1

    result = {}
    for domain in sorted(set(item_domains.values())):
        if domain not in counts:
            log.warning("domain %s has no judgments; excluded from accuracy", domain)
            continue
        domain_counts = counts[domain]
        result[domain] = DomainAccuracy(
            counts=domain_counts, total=sum(domain_counts.values())
        )
    return result


def apply_refinements(
    target: DomainLexicon | AmbiguousVocabulary,
    actions: list[RefinementAction],
) -> tuple[DomainLexicon | AmbiguousVocabulary, list[str]]:
    """Apply keep/remove actions, returning a refined copy plus warnings.

    ``remove`` deletes the (source, target) pair; entries whose in-domain
    or distractor set empties out are dropped entirely so type invariants
    keep holding. ``keep`` is a no-op audit marker. Unknown references
    warn instead of failing. Removals commute, so batch order is
    irrelevant.
    """
    warnings: list[str] = []
    if isinstance(target, DomainLexicon):
        refined = target.copy()
        for action in actions:
            if action.action == "keep":
                continue
            if action.domain != refined.domain:
                warnings.append(
                    f"action for domain {action.domain!r} ignored by lexicon "
                    f"{refined.domain!r}"
                )
                continue
            targets = refined.entries.get(action.source_word)
            if not targets or action.target_word not in targets:
                warnings.append(
                    f"no pair ({action.source_word!r}, {action.target_word!r}) "
                    f"in domain {refined.domain!r}"
                )
                continue
            del targets[action.target_word]
            if not targets:
                del refined.entries[action.source_word]
        return refined, warnings

    if isinstance(target, AmbiguousVocabulary):
        from .ambiguity import AmbiguousEntry

        refined_entries = dict(target.entries)
        for action in actions:
            if action.action == "keep":
                continue
            if action.domain != target.domain:
                warnings.append(
                    f"action for domain {action.domain!r} ignored by vocabulary "
                    f"{target.domain!r}"
                )
                continue
            entry = refined_entries.get(action.source_word)
            if entry is None:
                warnings.append(f"no entry for {action.source_word!r}")
                continue
            in_domain = set(entry.in_domain_translations)
            distractors = set(entry.distractor_translations)
            before = (len(in_domain), len(distractors))
            in_domain.discard(action.target_word)
            distractors = {
                (word, origin)
                for word, origin in distractors
                if word != action.target_word
            }
            if (len(in_domain), len(distractors)) == before:
                warnings.append(
                    f"no translation {action.target_word!r} under "
                    f"{action.source_word!r}"
                )
                continue
            if not in_domain or not distractors:
                del refined_entries[action.source_word]
            else:
                refined_entries[action.source_word] = AmbiguousEntry(
                    source_word=entry.source_word,
                    in_domain_translations=frozenset(in_domain),
                    distractor_translations=frozenset(distractors),
                )
        return AmbiguousVocabulary(domain=target.domain, entries=refined_entries), warnings

    raise AnnotationError(f"cannot refine {type(target).__name__}")


def write_items(items: list[ReviewItem], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item in items:
            fh.write(
                json.dumps(
                    {
                        "item_id": item.item_id,
                        "domain": item.domain,
                        "source_word": item.source_word,
                        "target_word": item.target_word,
                        "example_lines": list(item.example_lines),
                        "status": item.status,
                    },
                    ensure_ascii=False,
                    sort_keys=True,
                )
                + "\n"
            )


def read_items(path: str | Path) -> list[ReviewItem]:
    items = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            raw = json.loads(line)
            items.append(
                ReviewItem(
                    item_id=raw["item_id"],
                    domain=raw["domain"],
                    source_word=raw["source_word"],
                    target_word=raw["target_word"],
                    example_lines=tuple(raw.get("example_lines", ())),
                    status=raw.get("status", "pending"),
                )
            )
    return items
