"""Corpus ingestion: CoNLL column files, plain tokenized text, tag maps."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DataError, EmptyCorpusError, ParseError


class Vocabulary:
    """Interned word types with occurrence counts.

    Ids are dense and assigned in order of first occurrence.
    """

    def __init__(self):
        self.types: list[str] = []
        self.index: dict[str, int] = {}
        self.counts: list[int] = []

    def add(self, word: str) -> int:
        idx = self.index.get(word)
        if idx is None:
            idx = len(self.types)
            self.index[word] = idx
            self.types.append(word)
            self.counts.append(0)
        self.counts[idx] += 1
        return idx

    def get(self, word: str, default: int = -1) -> int:
        return self.index.get(word, default)

    def __len__(self) -> int:
        return len(self.types)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def __repr__(self) -> str:
        return f"Vocabulary(size={len(self)})"


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[int, ...]
    gold_tags: tuple[int, ...] | None = None

    def __post_init__(self):
        if len(self.tokens) < 1:
            raise DataError("sentences must contain at least one token")
        if self.gold_tags is not None and len(self.gold_tags) != len(self.tokens):
            raise DataError(
                f"gold tag count {len(self.gold_tags)} != token count {len(self.tokens)}"
            )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class TagMap:
    """Deterministic fine-grained -> universal tag mapping.

    ``inventory`` lists the image of the map in order of first appearance;
    it becomes the gold tag inventory of any corpus the map is applied to.
    """

    entries: dict[str, str]
    inventory: tuple[str, ...] = field(default=())

    def __post_init__(self):
        if not self.inventory:
            object.__setattr__(self, "inventory", tuple(dict.fromkeys(self.entries.values())))

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, fine: str) -> str:
        return self.entries[fine]

    def __contains__(self, fine: str) -> bool:
        return fine in self.entries


@dataclass(frozen=True)
class Corpus:
    sentences: tuple[Sentence, ...]
    vocabulary: Vocabulary
    tag_inventory: tuple[str, ...] = ()

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def has_gold(self) -> bool:
        return bool(self.sentences) and all(s.gold_tags is not None for s in self.sentences)

    @property
    def n_tokens(self) -> int:
        return sum(len(s) for s in self.sentences)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(s) for s in self.sentences], dtype=np.int64)

    def words(self) -> list[list[str]]:
        """Token strings, sentence by sentence."""
        types = self.vocabulary.types
        return [[types[t] for t in s.tokens] for s in self.sentences]

    def token_ids(self) -> np.ndarray:
        """All token ids concatenated in corpus order."""
        return np.fromiter(
            (t for s in self.sentences for t in s.tokens), dtype=np.int64, count=self.n_tokens
        )

    def gold(self) -> list[list[int]]:
        if not self.has_gold:
            raise DataError("corpus has no gold tags")
        return [list(s.gold_tags) for s in self.sentences]

    def gold_strings(self) -> list[list[str]]:
        return [[self.tag_inventory[t] for t in tags] for tags in self.gold()]


def _build(token_rows: Sequence[Sequence[str]], tag_rows: Sequence[Sequence[str]] | None) -> Corpus:
    if not token_rows:
        raise EmptyCorpusError("corpus contains no sentences")
    vocab = Vocabulary()
    tag_index: dict[str, int] = {}
    sentences = []
    for k, words in enumerate(token_rows):
        ids = tuple(vocab.add(w) for w in words)
        gold = None
        if tag_rows is not None:
            gold = tuple(tag_index.setdefault(t, len(tag_index)) for t in tag_rows[k])
        sentences.append(Sentence(ids, gold))
    return Corpus(tuple(sentences), vocab, tuple(tag_index))


def parse_conll(
    stream: Iterable[str],
    token_column: int = 0,
    tag_column: int | None = None,
    lowercase: bool = False,
) -> Corpus:
    """Read a whitespace-separated column file, one token per line.

    Blank lines end sentences and lines starting with ``#`` are skipped.
    Column indices are zero-based.  When ``tag_column`` is given, gold tags
    are read from it and interned in order of first appearance.
    """
    needed = max(token_column, -1 if tag_column is None else tag_column) + 1
    token_rows: list[list[str]] = []
    tag_rows: list[list[str]] = []
    words: list[str] = []
    tags: list[str] = []
    for lineno, line in enumerate(stream, start=1):
        line = line.rstrip("\r\n")
        if line.startswith("#"):
            continue
        cols = line.split()
        if not cols:
            if words:
                token_rows.append(words)
                tag_rows.append(tags)
                words, tags = [], []
            continue
        if len(cols) < needed:
            raise ParseError(f"expected at least {needed} columns, found {len(cols)}", lineno)
        word = cols[token_column]
        words.append(word.lower() if lowercase else word)
        if tag_column is not None:
            tags.append(cols[tag_column])
    if words:
        token_rows.append(words)
        tag_rows.append(tags)
    return _build(token_rows, tag_rows if tag_column is not None else None)


def parse_plain_text(stream: Iterable[str], lowercase: bool = False) -> Corpus:
    """One pre-tokenized sentence per line; blank lines are skipped."""
    rows = []
    for line in stream:
        words = line.split()
        if words:
            rows.append([w.lower() for w in words] if lowercase else words)
    return _build(rows, None)


def load_tag_map(stream: Iterable[str]) -> TagMap:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(stream, start=1):
        cols = line.split()
        if not cols:
            continue
        if len(cols) != 2:
            raise ParseError(f"tag map lines need 2 columns, found {len(cols)}", lineno)
        fine, universal = cols
        if entries.get(fine, universal) != universal:
            raise DataError(
                f"conflicting mapping for tag {fine!r}: {entries[fine]!r} vs {universal!r}"
            )
        entries[fine] = universal
    return TagMap(entries)


def apply_tag_map(corpus: Corpus, tag_map: TagMap) -> Corpus:
    """Rewrite gold tags through ``tag_map``; tokens are shared, not copied."""
    if not corpus.has_gold:
        raise DataError("cannot apply a tag map to a corpus without gold tags")
    inventory = tag_map.inventory
    target = {t: i for i, t in enumerate(inventory)}
    lookup = []
    for fine in corpus.tag_inventory:
        if fine not in tag_map:
            raise DataError(f"tag {fine!r} is not covered by the tag map")
        lookup.append(target[tag_map[fine]])
    sentences = tuple(
        Sentence(s.tokens, tuple(lookup[t] for t in s.gold_tags)) for s in corpus.sentences
    )
    return Corpus(sentences, corpus.vocabulary, inventory)


def read_corpus(path, fmt: str = "conll", token_column: int = 0, tag_column: int | None = None,
                lowercase: bool = False) -> Corpus:
    with open(path, encoding="utf-8") as fh:
        if fmt == "conll":
            return parse_conll(fh, token_column, tag_column, lowercase)
        if fmt == "plain":
            return parse_plain_text(fh, lowercase)
    raise DataError(f"unknown corpus format {fmt!r}")


def read_label_file(stream: Iterable[str], lengths: Sequence[int],
                    inventory: Sequence[str] | None = None) -> tuple[list[np.ndarray], list[str]]:
    """Read token-aligned reconstruction labels (e.g. Brown cluster ids).

    Returns per-sentence integer label arrays and the label inventory.
    Blank lines are skipped, so the k-th non-blank line pairs with sentence
    ``k``.  With a fixed ``inventory``, labels outside it map to ``-1``.
    """
    fixed = inventory is not None
    index: dict[str, int] = {x: i for i, x in enumerate(inventory or ())}
    out = []
    k = 0
    for lineno, line in enumerate(stream, start=1):
        labels = line.split()
        if not labels:
            continue
        if k >= len(lengths):
            raise ParseError("more label lines than corpus sentences", lineno)
        if len(labels) != lengths[k]:
            raise ParseError(
                f"{len(labels)} labels for a sentence of {lengths[k]} tokens", lineno
            )
        if fixed:
            ids = [index.get(x, -1) for x in labels]
        else:
            ids = [index.setdefault(x, len(index)) for x in labels]
        out.append(np.array(ids, dtype=np.int64))
        k += 1
    if k != len(lengths):
        raise DataError(f"label file has {k} sentences, corpus has {len(lengths)}")
    return out, list(index)
