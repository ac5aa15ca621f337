"""Parallel corpus loading, tokenization, and Pharaoh alignment parsing.

A corpus manifest is a JSON file naming the language pair and, per domain,
the five data files (train source/target/alignment, test source/target).
All text is NFC-normalized at load time; a loaded :class:`Corpus` is
immutable and safe to share across threads.
"""

from __future__ import annotations

import json
import re
import unicodedata
from dataclasses import dataclass
from pathlib import Path

# Language registry: code -> (display name, script family). The "cjk"
# family is tokenized per character with ASCII letter/digit runs kept
# whole; everything else splits on whitespace with edge punctuation
# peeled off.
LANGUAGES: dict[str, tuple[str, str]] = {
    "en": ("English", "space"),
    "de": ("German", "space"),
    "fr": ("French", "space"),
    "es": ("Spanish", "space"),
    "it": ("Italian", "space"),
    "pt": ("Portuguese", "space"),
    "ru": ("Russian", "space"),
    "zh": ("Chinese", "cjk"),
    "ja": ("Japanese", "cjk"),
    "ko": ("Korean", "cjk"),
}

SPLITS = ("train", "test")

_DOMAIN_ID_RE = re.compile(r"[a-z0-9_-]+\Z")
_ASCII_RUN = re.compile(r"[A-Za-z0-9]+")
_FIELD_RE = re.compile(r"\S+")


class CorpusError(ValueError):
    """Raised for manifest, data-file, or language problems at load time."""


class AlignmentParseError(CorpusError):
    """Malformed Pharaoh alignment token; carries its position in the line."""

    def __init__(self, message: str, token_index: int, column: int):
        super().__init__(message)
        self.token_index = token_index
        self.column = column


@dataclass(frozen=True)
class Domain:
    id: str
    display_name: str


@dataclass(frozen=True)
class AlignmentLink:
    src_index: int
    tgt_index: int


@dataclass(frozen=True)
class SentencePair:
    """One aligned sentence with its tokenization.

    ``source_text``/``target_text`` keep the raw (NFC) line for prompt
    rendering and reference scoring; the token tuples are what alignment
    indices and annotations refer to. ``line_no`` is 1-based within the
    domain's split.
    """

    source_text: str
    target_text: str
    source_tokens: tuple[str, ...]
    target_tokens: tuple[str, ...]
    domain: str
    split: str
    line_no: int


@dataclass(frozen=True)
class Corpus:
    language_pair: tuple[str, str]
    domains: tuple[Domain, ...]
    pairs: tuple[SentencePair, ...]
    # (domain id, train line_no) -> alignment links for that sentence
    alignments: dict[tuple[str, int], tuple[AlignmentLink, ...]]

    @property
    def source_language(self) -> str:
        return self.language_pair[0]

    @property
    def target_language(self) -> str:
        return self.language_pair[1]

    def domain(self, domain_id: str) -> Domain:
        for d in self.domains:
            if d.id == domain_id:
                return d
        raise CorpusError(f"unknown domain: {domain_id!r}")

    def split_pairs(self, domain_id: str, split: str) -> list[SentencePair]:
        return [p for p in self.pairs if p.domain == domain_id and p.split == split]

    def train_pairs(self, domain_id: str) -> list[SentencePair]:
        return self.split_pairs(domain_id, "train")

    def test_pairs(self, domain_id: str) -> list[SentencePair]:
        return self.split_pairs(domain_id, "test")

    def alignment_for(self, pair: SentencePair) -> tuple[AlignmentLink, ...]:
        if pair.split != "train":
            raise CorpusError("alignments exist only for train pairs")
        return self.alignments[(pair.domain, pair.line_no)]


def language_display_name(code: str) -> str:
    _require_language(code)
    return LANGUAGES[code][0]


def _require_language(code: str) -> None:
    if code not in LANGUAGES:
        known = ", ".join(sorted(LANGUAGES))
        raise CorpusError(f"unknown language code: {code!r} (known: {known})")


def tokenize(text: str, language: str) -> list[str]:
    """Tokenize ``text`` deterministically for ``language``.

    Space-delimited languages split on whitespace and peel punctuation
    off token edges. CJK languages yield one token per character, except
    runs of ASCII letters/digits which stay whole. Never yields an empty
    token; every non-whitespace character of the input is preserved.
    """
    _require_language(language)
    text = unicodedata.normalize("NFC", text)
    if LANGUAGES[language][1] == "cjk":
        return _tokenize_cjk(text)
    return _tokenize_space(text)


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def is_punctuation_token(token: str) -> bool:
    return bool(token) and all(_is_punct(ch) for ch in token)


def _tokenize_space(text: str) -> list[str]:
    tokens: list[str] = []
    for chunk in text.split():
        lead: list[str] = []
        trail: list[str] = []
        while chunk and _is_punct(chunk[0]):
            lead.append(chunk[0])
            chunk = chunk[1:]
        while chunk and _is_punct(chunk[-1]):
            trail.append(chunk[-1])
            chunk = chunk[:-1]
        tokens.extend(lead)
        if chunk:
            tokens.append(chunk)
        tokens.extend(reversed(trail))
    return tokens


def _tokenize_cjk(text: str) -> list[str]:
    tokens: list[str] = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
            continue
        run = _ASCII_RUN.match(text, i)
        if run:
            tokens.append(run.group())
            i = run.end()
            continue
        tokens.append(ch)
        i += 1
    return tokens


def parse_alignment_line(line: str) -> list[AlignmentLink]:
    """Parse one Pharaoh-format line (``i-j`` pairs) into alignment links.

    Duplicates are preserved in input order; an empty line means an
    unaligned sentence.
    """
    links: list[AlignmentLink] = []
    for token_index, match in enumerate(_FIELD_RE.finditer(line), start=1):
        token = match.group()
        src, sep, tgt = token.partition("-")
        if not sep or not src.isdigit() or not tgt.isdigit():
            raise AlignmentParseError(
                f"malformed alignment token {token!r} at token {token_index} "
                f"(column {match.start() + 1}); expected <int>-<int>",
                token_index=token_index,
                column=match.start() + 1,
            )
        links.append(AlignmentLink(int(src), int(tgt)))
    return links


_DOMAIN_FILE_KEYS = ("train_src", "train_tgt", "train_align", "test_src", "test_tgt")


def _read_lines(path: Path) -> list[str]:
    if not path.is_file():
        raise CorpusError(f"missing file: {path}")
    with open(path, encoding="utf-8") as fh:
        return [unicodedata.normalize("NFC", line.rstrip("\n")) for line in fh]


def _check_line_counts(counts: dict[Path, int]) -> None:
    paths = list(counts)
    for other in paths[1:]:
        if counts[other] != counts[paths[0]]:
            first_bad = min(counts[paths[0]], counts[other]) + 1
            raise CorpusError(
                f"mismatched line counts: {paths[0]} has {counts[paths[0]]} lines, "
                f"{other} has {counts[other]} lines (first mismatch at line {first_bad})"
            )


def load_manifest(manifest_path: str | Path) -> dict:
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise CorpusError(f"missing file: {manifest_path}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise CorpusError(f"invalid manifest {manifest_path}: {exc}") from exc
    for key in ("language_pair", "domains"):
        if key not in manifest:
            raise CorpusError(f"manifest {manifest_path} missing key {key!r}")
    return manifest


def load_corpus(manifest_path: str | Path) -> Corpus:
    """Load and validate the corpus described by a JSON manifest.

    Errors out on missing files, per-domain line-count mismatches (naming
    both files and the first bad line), unknown language codes, empty
    sentences, and out-of-bounds alignment links.
    """
    manifest_path = Path(manifest_path)
    manifest = load_manifest(manifest_path)
    base = manifest_path.parent

    src_lang, tgt_lang = manifest["language_pair"]
    _require_language(src_lang)
    _require_language(tgt_lang)

    domains: list[Domain] = []
    pairs: list[SentencePair] = []
    alignments: dict[tuple[str, int], tuple[AlignmentLink, ...]] = {}
    seen_ids: set[str] = set()

    for entry in manifest["domains"]:
        domain_id = entry.get("id", "")
        if not domain_id or not _DOMAIN_ID_RE.match(domain_id):
            raise CorpusError(f"invalid domain id: {domain_id!r}")
        if domain_id in seen_ids:
            raise CorpusError(f"duplicate domain id: {domain_id!r}")
        seen_ids.add(domain_id)
        domains.append(Domain(domain_id, entry.get("display_name", domain_id)))

        files = {}
        for key in _DOMAIN_FILE_KEYS:
            if key not in entry:
                raise CorpusError(f"domain {domain_id!r} missing manifest key {key!r}")
            files[key] = base / entry[key]

        train_src = _read_lines(files["train_src"])
        train_tgt = _read_lines(files["train_tgt"])
        train_align = _read_lines(files["train_align"])
        _check_line_counts(
            {
                files["train_src"]: len(train_src),
                files["train_tgt"]: len(train_tgt),
                files["train_align"]: len(train_align),
            }
        )
        test_src = _read_lines(files["test_src"])
        test_tgt = _read_lines(files["test_tgt"])
        _check_line_counts(
            {files["test_src"]: len(test_src), files["test_tgt"]: len(test_tgt)}
        )

        for split, src_lines, tgt_lines in (
            ("train", train_src, train_tgt),
            ("test", test_src, test_tgt),
        ):
            for line_no, (src, tgt) in enumerate(zip(src_lines, tgt_lines), start=1):
                src_tokens = tokenize(src, src_lang)
                tgt_tokens = tokenize(tgt, tgt_lang)
                if not src_tokens or not tgt_tokens:
                    side = "source" if not src_tokens else "target"
                    raise CorpusError(
                        f"empty {side} sentence in domain {domain_id!r}, "
                        f"{split} line {line_no}"
                    )
                pairs.append(
                    SentencePair(
                        source_text=src,
                        target_text=tgt,
                        source_tokens=tuple(src_tokens),
                        target_tokens=tuple(tgt_tokens),
                        domain=domain_id,
                        split=split,
                        line_no=line_no,
                    )
                )

        train_pairs = [p for p in pairs if p.domain == domain_id and p.split == "train"]
        for pair, line in zip(train_pairs, train_align):
            try:
                links = parse_alignment_line(line)
            except AlignmentParseError as exc:
                raise CorpusError(
                    f"{files['train_align']} line {pair.line_no}: {exc}"
                ) from exc
            for link in links:
                if not (0 <= link.src_index < len(pair.source_tokens)) or not (
                    0 <= link.tgt_index < len(pair.target_tokens)
                ):
                    raise CorpusError(
                        f"{files['train_align']} line {pair.line_no}: alignment link "
                        f"{link.src_index}-{link.tgt_index} out of bounds for sentence "
                        f"with {len(pair.source_tokens)} source / "
                        f"{len(pair.target_tokens)} target tokens"
                    )
            alignments[(domain_id, pair.line_no)] = tuple(links)

    return Corpus(
        language_pair=(src_lang, tgt_lang),
        domains=tuple(domains),
        pairs=tuple(pairs),
        alignments=alignments,
    )


def corpus_summary(corpus: Corpus) -> list[tuple[str, int, int]]:
    """Per-domain (id, train count, test count), in manifest order."""
    return [
        (d.id, len(corpus.train_pairs(d.id)), len(corpus.test_pairs(d.id)))
        for d in corpus.domains
    ]
