"""Log-space inference on first-order chains.

A chain of length ``L`` over ``T`` tags scores a tag sequence ``y`` as::

    start[y0] + sum_i emission[i, y_i] + sum_i transition[y_{i-1}, y_i] + stop[y_{L-1}]

All routines work with log-potentials; ``-inf`` marks a forbidden entry.
The batched routines take hmmlearn-style flat inputs: emissions for every
token of every sequence stacked into one ``(n_tokens, T)`` array plus the
sequence ``lengths``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .exceptions import DataError, DegenerateLatticeError

BRUTE_FORCE_LIMIT = 10**6


def logsumexp(a, axis):
    """``log(sum(exp(a)))`` along ``axis``; all-``-inf`` slices give ``-inf``."""
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis)


@dataclass
class ChainPotentials:
    start: np.ndarray
    transition: np.ndarray
    stop: np.ndarray
    emission: np.ndarray

    def __post_init__(self):
        self.start = np.asarray(self.start, dtype=np.float64)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.stop = np.asarray(self.stop, dtype=np.float64)
        self.emission = np.atleast_2d(np.asarray(self.emission, dtype=np.float64))
        T = self.start.shape[0]
        if (self.transition.shape != (T, T) or self.stop.shape != (T,)
                or self.emission.shape[1] != T or self.emission.shape[0] < 1):
            raise DataError("inconsistent potential shapes")
        for name in ("start", "transition", "stop", "emission"):
            arr = getattr(self, name)
            if np.isnan(arr).any() or np.isposinf(arr).any():
                raise DataError(f"{name} potentials contain NaN or +inf")

    @property
    def num_tags(self) -> int:
        return self.start.shape[0]

    @property
    def length(self) -> int:
        return self.emission.shape[0]

    def score(self, tags) -> float:
        """Log-potential of one complete tag sequence."""
        tags = np.asarray(tags)
        s = self.start[tags[0]] + self.stop[tags[-1]]
        s += self.emission[np.arange(len(tags)), tags].sum()
        s += self.transition[tags[:-1], tags[1:]].sum()
        return float(s)


@dataclass
class Posteriors:
    unary: np.ndarray
    pairwise: np.ndarray
    log_partition: float


def _check_emission(emission, lengths):
    dead = np.all(np.isneginf(emission), axis=1)
    if dead.any():
        tok = int(np.flatnonzero(dead)[0])
        offsets = np.cumsum(lengths)
        seq = int(np.searchsorted(offsets, tok, side="right"))
        pos = tok - (offsets[seq - 1] if seq else 0)
        raise DegenerateLatticeError(
            f"no admissible tag at position {pos} of sequence {seq}"
        )


def _pad(flat, lengths, fill=0.0):
    B, L = len(lengths), int(lengths.max())
    out = np.full((B, L) + flat.shape[1:], fill)
    mask = np.arange(L)[None, :] < lengths[:, None]
    out[mask] = flat
    return out, mask


def _forward_backward_padded(start, trans, stop, em, lengths):
    B, L, T = em.shape
    alpha = np.empty((B, L, T))
    beta = np.empty((B, L, T))
    alpha[:, 0] = start + em[:, 0]
    for i in range(1, L):
        a = logsumexp(alpha[:, i - 1, :, None] + trans, axis=1) + em[:, i]
        alpha[:, i] = np.where((i < lengths)[:, None], a, alpha[:, i - 1])
    log_z = logsumexp(alpha[:, -1] + stop, axis=1)
    beta[:, -1] = stop
    for i in range(L - 2, -1, -1):
        b = logsumexp(trans + (em[:, i + 1] + beta[:, i + 1])[:, None, :], axis=2)
        beta[:, i] = np.where((i < lengths - 1)[:, None], b, stop)
    return alpha, beta, log_z


def _chunks(lengths, max_cells=1 << 18):
    """Group sequence indices of similar length so padding stays small."""
    order = np.argsort(lengths, kind="stable")
    chunk = []
    for idx in order:
        if chunk and (len(chunk) + 1) * lengths[idx] > max_cells:
            yield np.array(chunk)
            chunk = []
        chunk.append(idx)
    if chunk:
        yield np.array(chunk)


@dataclass
class BatchPosteriors:
    """Posteriors summed over a batch of sequences.

    ``unary`` is ``(n_tokens, T)`` aligned with the flat input; the
    transition, start and stop arrays are expected counts summed over all
    sequences; ``log_partition`` has one entry per sequence.
    """

    unary: np.ndarray
    transition_counts: np.ndarray
    start_counts: np.ndarray
    stop_counts: np.ndarray
    log_partition: np.ndarray


def batch_forward_backward(start, transition, stop, emission, lengths) -> BatchPosteriors:
    """Forward-backward over many sequences at once.

    Parameters
    ----------
    start, stop : array, shape (T,)
    transition : array, shape (T, T)
    emission : array, shape (n_tokens, T)
        Emission log-potentials of all sequences, concatenated.
    lengths : array of int, shape (n_sequences,)
    """
    lengths = np.asarray(lengths, dtype=np.int64)
    emission = np.asarray(emission, dtype=np.float64)
    _check_emission(emission, lengths)
    T = emission.shape[1]
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    unary = np.zeros_like(emission)
    trans_counts = np.zeros((T, T))
    log_z = np.empty(len(lengths))
    for idx in _chunks(lengths):
        lens = lengths[idx]
        rows = np.concatenate([np.arange(offsets[k], offsets[k + 1]) for k in idx])
        em, mask = _pad(emission[rows], lens)
        alpha, beta, lz = _forward_backward_padded(start, transition, stop, em, lens)
        if not np.all(np.isfinite(lz)):
            k = np.flatnonzero(~np.isfinite(lz))[0]
            what = "a NaN log partition" if np.isnan(lz[k]) else "zero total potential"
            raise DegenerateLatticeError(f"sequence {int(idx[k])} has {what}")
        log_z[idx] = lz
        with np.errstate(under="ignore"):
            post = np.exp((alpha + beta)[mask] - np.repeat(lz, lens)[:, None])
        unary[rows] = post
        if em.shape[1] > 1:
            right = em[:, 1:] + beta[:, 1:]
            xi = alpha[:, :-1, :, None] + transition + right[:, :, None, :] - lz[:, None, None, None]
            # padding cells are meaningless and may be huge; drop them before exponentiating
            xi[~mask[:, 1:]] = -np.inf
            with np.errstate(under="ignore"):
                xi = np.exp(xi)
            trans_counts += xi.sum(axis=(0, 1))
    starts = offsets[:-1]
    ends = offsets[1:] - 1
    return BatchPosteriors(unary, trans_counts, unary[starts].sum(0), unary[ends].sum(0), log_z)


def forward(potentials: ChainPotentials) -> np.ndarray:
    """Log forward table ``alpha[i, t]`` (excludes the stop potential)."""
    p = potentials
    _check_emission(p.emission, np.array([p.length]))
    alpha, _, _ = _forward_backward_padded(
        p.start, p.transition, p.stop, p.emission[None], np.array([p.length]))
    return alpha[0]


def backward(potentials: ChainPotentials) -> np.ndarray:
    """Log backward table ``beta[i, t]`` (includes the stop potential)."""
    p = potentials
    _check_emission(p.emission, np.array([p.length]))
    _, beta, _ = _forward_backward_padded(
        p.start, p.transition, p.stop, p.emission[None], np.array([p.length]))
    return beta[0]


def forward_backward(potentials: ChainPotentials) -> Posteriors:
    """Exact unary and pairwise marginals and the log partition function."""
    p = potentials
    lengths = np.array([p.length])
    _check_emission(p.emission, lengths)
    alpha, beta, lz = _forward_backward_padded(
        p.start, p.transition, p.stop, p.emission[None], lengths)
    alpha, beta, lz = alpha[0], beta[0], float(lz[0])
    if not np.isfinite(lz):
        raise DegenerateLatticeError("sequence has zero total potential")
    with np.errstate(under="ignore"):
        unary = np.exp(alpha + beta - lz)
        right = p.emission[1:] + beta[1:]
        pairwise = np.exp(alpha[:-1, :, None] + p.transition + right[:, None, :] - lz)
    return Posteriors(unary, pairwise, lz)


def viterbi(potentials: ChainPotentials) -> tuple[np.ndarray, float]:
    """Highest-scoring tag sequence and its score.

    Among equally scoring sequences the lexicographically smallest one is
    returned: the best completion score of every (position, tag) is computed
    right to left, then tags are chosen left to right taking the lowest id
    that still attains the optimum.
    """
    p = potentials
    _check_emission(p.emission, np.array([p.length]))
    L = p.length
    best = np.empty((L, p.num_tags))
    best[-1] = p.emission[-1] + p.stop
    for i in range(L - 2, -1, -1):
        best[i] = p.emission[i] + np.max(p.transition + best[i + 1][None, :], axis=1)
    first = p.start + best[0]
    score = float(first.max())
    if not np.isfinite(score):
        raise DegenerateLatticeError("no tag sequence has finite score")
    tags = np.empty(L, dtype=np.int64)
    tags[0] = np.argmax(first)
    for i in range(1, L):
        tags[i] = np.argmax(p.transition[tags[i - 1]] + best[i])
    return tags, score


def posterior_decode(potentials: ChainPotentials) -> np.ndarray:
    """Per-position argmax of the unary marginals (ties to the lower id)."""
    return np.argmax(forward_backward(potentials).unary, axis=1)


def enumerate_scores(potentials: ChainPotentials) -> tuple[np.ndarray, np.ndarray]:
    """Every tag sequence with its score, in lexicographic order."""
    p = potentials
    T, L = p.num_tags, p.length
    if T ** L > BRUTE_FORCE_LIMIT:
        raise ValueError(f"refusing to enumerate {T}^{L} sequences (limit {BRUTE_FORCE_LIMIT})")
    seqs = np.array(list(itertools.product(range(T), repeat=L)), dtype=np.int64).reshape(-1, L)
    scores = p.start[seqs[:, 0]] + p.stop[seqs[:, -1]]
    scores = scores + p.emission[np.arange(L), seqs].sum(axis=1)
    if L > 1:
        scores = scores + p.transition[seqs[:, :-1], seqs[:, 1:]].sum(axis=1)
    return seqs, scores


def brute_force_posteriors(potentials: ChainPotentials) -> Posteriors:
    """Marginals by explicit summation over all ``T**L`` sequences."""
    p = potentials
    seqs, scores = enumerate_scores(p)
    T, L = p.num_tags, p.length
    lz = float(logsumexp(scores, axis=0))
    if not np.isfinite(lz):
        raise DegenerateLatticeError("sequence has zero total potential")
    w = np.exp(scores - lz)
    unary = np.zeros((L, T))
    pairwise = np.zeros((max(L - 1, 0), T, T))
    for i in range(L):
        np.add.at(unary[i], seqs[:, i], w)
        if i + 1 < L:
            np.add.at(pairwise[i], (seqs[:, i], seqs[:, i + 1]), w)
    return Posteriors(unary, pairwise, lz)
