"""Synthetic corpora sampled from a known Gaussian-emission HMM."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

import numpy as np

from .embeddings import EmbeddingTable
from .utils import substream


@dataclass
class SyntheticCorpus:
    sentences: list[list[str]]
    tags: list[list[int]]
    table: EmbeddingTable
    means: np.ndarray
    startprob: np.ndarray
    transmat: np.ndarray

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(s) for s in self.sentences], dtype=np.int64)

    def vectors(self) -> np.ndarray:
        return np.vstack([self.table.lookup_many(s) for s in self.sentences])

    def flat_tags(self) -> np.ndarray:
        return np.concatenate([np.asarray(t) for t in self.tags])


def make_gaussian_hmm_corpus(n_tags=3, dim=5, n_tokens=2000, words_per_tag=20,
                             variance=0.45, separation=10.0, min_length=5, max_length=25,
                             tag_names=None, n_sentences=None, random_state=0) -> SyntheticCorpus:
    """Sample sentences from a diagonal-Gaussian HMM.

    Tag means are drawn until every pair is at least ``separation``
    standard deviations apart.  Each tag owns ``words_per_tag`` word types
    whose vectors are drawn from ``N(mean_tag, variance * I)``; a token's
    embedding is the vector of its word type, so the same corpus serves
    both embedding-based and word-identity-based models.

    With ``n_sentences`` set, exactly that many sentences are drawn and
    ``n_tokens`` is ignored.
    """
    rng = substream(random_state, "sampling")
    sigma = np.sqrt(variance)
    box = max(2.0, separation * sigma * 0.75)
    while True:
        means = rng.uniform(-box, box, size=(n_tags, dim))
        gaps = np.linalg.norm(means[:, None] - means[None], axis=-1)
        if np.all(gaps[np.triu_indices(n_tags, 1)] >= separation * sigma):
            break
    startprob = rng.dirichlet(np.ones(n_tags))
    transmat = rng.dirichlet(np.full(n_tags, 0.7), size=n_tags)

    names = tag_names or [f"t{t}" for t in range(n_tags)]
    words = [[f"{names[t].lower()}{j:02d}" for j in range(words_per_tag)] for t in range(n_tags)]
    vecs = means[:, None, :] + sigma * rng.standard_normal((n_tags, words_per_tag, dim))
    table = EmbeddingTable([w for ws in words for w in ws], vecs.reshape(-1, dim))
    # Zipf-like word frequencies within each tag
    freq = 1.0 / np.arange(1, words_per_tag + 1)
    freq /= freq.sum()

    sentences, tags = [], []
    remaining = n_tokens
    while (remaining > 0) if n_sentences is None else (len(sentences) < n_sentences):
        length = int(rng.integers(min_length, max_length + 1))
        if n_sentences is None:
            length = min(length, remaining)
        seq = [int(rng.choice(n_tags, p=startprob))]
        for _ in range(length - 1):
            seq.append(int(rng.choice(n_tags, p=transmat[seq[-1]])))
        sentences.append([words[t][rng.choice(words_per_tag, p=freq)] for t in seq])
        tags.append(seq)
        remaining -= length
    return SyntheticCorpus(sentences, tags, table, means, startprob, transmat)


def fixture_path(name: str) -> str:
    """Path of a file in the bundled toy fixture (``toy.conll``, ``toy.vec``, ...)."""
    return str(resources.files("posinduce") / "data" / name)
