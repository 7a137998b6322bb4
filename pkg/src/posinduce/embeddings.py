"""Pre-trained word vectors in the word2vec text and binary formats."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import BinaryIO, Iterable, Sequence

import numpy as np

from .exceptions import DataError, EmptyTableError, ParseError, TruncatedFileError


class EmbeddingTable:
    """Word -> vector map with a single shared out-of-vocabulary point.

    Vectors are held as float64 regardless of the storage precision.  The
    OOV vector is the arithmetic mean of all stored vectors.

    Parameters
    ----------
    words : sequence of str
        Distinct words, in row order.
    matrix : array, shape (n_words, dim)
    """

    def __init__(self, words: Sequence[str], matrix):
        matrix = np.asarray(matrix, dtype=np.float64)
        if matrix.ndim != 2 or matrix.shape[0] != len(words):
            raise DataError("embedding matrix must have one row per word")
        if len(words) == 0:
            raise EmptyTableError("embedding table is empty")
        if not np.all(np.isfinite(matrix)):
            raise DataError("embedding table contains non-finite values")
        self.words = list(words)
        self.matrix = matrix
        self.index = {w: i for i, w in enumerate(self.words)}
        if len(self.index) != len(self.words):
            raise DataError("duplicate words in embedding table")
        self.oov_vector = matrix.mean(axis=0)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    @property
    def vectors(self) -> dict[str, np.ndarray]:
        return {w: self.matrix[i] for w, i in self.index.items()}

    def __len__(self) -> int:
        return len(self.words)

    def __contains__(self, word: str) -> bool:
        return word in self.index

    def lookup(self, word: str) -> np.ndarray:
        i = self.index.get(word)
        return self.oov_vector if i is None else self.matrix[i]

    def lookup_many(self, words: Iterable[str]) -> np.ndarray:
        rows = [self.index.get(w, -1) for w in words]
        return self.stack_rows(np.array(rows, dtype=np.int64))

    def stack_rows(self, rows: np.ndarray) -> np.ndarray:
        """Vectors for table row ids, ``-1`` meaning OOV."""
        out = self.matrix[np.where(rows < 0, 0, rows)]
        out[rows < 0] = self.oov_vector
        return out

    def __repr__(self) -> str:
        return f"EmbeddingTable(n_words={len(self)}, dim={self.dim})"


def lookup(table: EmbeddingTable, word: str) -> np.ndarray:
    return table.lookup(word)


def _from_entries(entries: list[tuple[str, np.ndarray]], dim: int, lowercase: bool) -> EmbeddingTable:
    rows: dict[str, np.ndarray] = {}
    for word, vec in entries:
        if lowercase:
            # case-folding collisions keep the first (most frequent) spelling
            rows.setdefault(word.lower(), vec)
            continue
        if word in rows:
            warnings.warn(f"duplicate embedding for {word!r}; keeping the last one", stacklevel=3)
        rows[word] = vec
    matrix = np.vstack(list(rows.values())) if rows else np.zeros((0, dim))
    return EmbeddingTable(list(rows), matrix)


def _parse_header(line: str, lineno: int = 1) -> tuple[int, int]:
    parts = line.split()
    if len(parts) != 2:
        raise ParseError("header must be '<vocab_size> <dim>'", lineno)
    try:
        n, dim = int(parts[0]), int(parts[1])
    except ValueError:
        raise ParseError("header must be '<vocab_size> <dim>'", lineno) from None
    if n < 0 or dim <= 0:
        raise ParseError(f"bad header values {n} {dim}", lineno)
    if n == 0:
        raise EmptyTableError("embedding file declares zero words")
    return n, dim


def load_word2vec_text(stream: Iterable[str], lowercase: bool = False) -> EmbeddingTable:
    it = iter(stream)
    header = next(it, None)
    if header is None or not header.strip():
        raise ParseError("empty embedding file", 1)
    n, dim = _parse_header(header)
    entries = []
    for lineno, line in enumerate(it, start=2):
        parts = line.rstrip("\r\n").split(" ")
        parts = [p for p in parts if p]
        if not parts:
            continue
        if len(entries) == n:
            raise ParseError(f"more rows than the {n} declared in the header", lineno)
        if len(parts) != dim + 1:
            raise ParseError(f"expected word plus {dim} values, found {len(parts) - 1} values", lineno)
        try:
            vec = np.array([float(x) for x in parts[1:]])
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        if not np.all(np.isfinite(vec)):
            raise ParseError(f"non-finite value in vector for {parts[0]!r}", lineno)
        entries.append((parts[0], vec))
    if len(entries) < n:
        raise TruncatedFileError(f"header declares {n} rows, file has {len(entries)}")
    return _from_entries(entries, dim, lowercase)


def load_word2vec_binary(stream: BinaryIO, lowercase: bool = False) -> EmbeddingTable:
    data = stream.read()
    nl = data.find(b"\n")
    if not data or nl < 0:
        raise ParseError("empty or header-less embedding file", 1)
    n, dim = _parse_header(data[:nl].decode("ascii", errors="replace"))
    pos = nl + 1
    width = 4 * dim
    entries = []
    for k in range(n):
        while pos < len(data) and data[pos:pos + 1] in (b"\n", b"\r"):
            pos += 1
        end = data.find(b" ", pos)
        if end < 0 or end + 1 + width > len(data):
            raise TruncatedFileError(f"stream ended inside entry {k + 1} of {n}")
        word = data[pos:end].decode("utf-8", errors="replace")
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=end + 1).astype(np.float64)
        if not np.all(np.isfinite(vec)):
            raise ParseError(f"non-finite value in vector for {word!r} (entry {k + 1})")
        entries.append((word, vec))
        pos = end + 1 + width
    return _from_entries(entries, dim, lowercase)


def write_word2vec_text(table: EmbeddingTable, stream, precision: int = 6) -> None:
    stream.write(f"{len(table)} {table.dim}\n")
    for word, row in zip(table.words, table.matrix):
        stream.write(word + " " + " ".join(f"{x:.{precision}f}" for x in row) + "\n")


def write_word2vec_binary(table: EmbeddingTable, stream) -> None:
    stream.write(f"{len(table)} {table.dim}\n".encode("ascii"))
    for word, row in zip(table.words, table.matrix):
        stream.write(word.encode("utf-8") + b" " + row.astype("<f4").tobytes() + b"\n")


def read_embeddings(path, fmt: str = "auto", lowercase: bool = False) -> EmbeddingTable:
    path = str(path)
    if fmt == "auto":
        fmt = "binary" if path.endswith(".bin") else "text"
    if fmt == "binary":
        with open(path, "rb") as fh:
            return load_word2vec_binary(fh, lowercase)
    if fmt == "text":
        with open(path, encoding="utf-8") as fh:
            return load_word2vec_text(fh, lowercase)
    raise DataError(f"unknown embedding format {fmt!r}")


@dataclass(frozen=True)
class CoverageReport:
    n_tokens: int
    n_types: int
    oov_tokens: int
    oov_types: int

    @property
    def token_oov_rate(self) -> float:
        return self.oov_tokens / self.n_tokens if self.n_tokens else 0.0

    @property
    def type_oov_rate(self) -> float:
        return self.oov_types / self.n_types if self.n_types else 0.0


def embed_corpus(corpus, table: EmbeddingTable) -> tuple[list[np.ndarray], CoverageReport]:
    """Resolve every token of ``corpus`` to its vector.

    Returns one ``(length, dim)`` array per sentence plus OOV statistics.
    """
    if len(corpus) == 0:
        raise DataError("cannot embed an empty corpus")
    vocab = corpus.vocabulary
    type_rows = np.array([table.index.get(w, -1) for w in vocab.types], dtype=np.int64)
    type_vectors = table.stack_rows(type_rows)
    counts = np.asarray(vocab.counts)
    oov = type_rows < 0
    report = CoverageReport(
        n_tokens=int(counts.sum()),
        n_types=len(vocab),
        oov_tokens=int(counts[oov].sum()),
        oov_types=int(oov.sum()),
    )
    seqs = [type_vectors[np.asarray(s.tokens)] for s in corpus.sentences]
    return seqs, report
