"""Token-level clustering metrics: V-measure and many-to-one accuracy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import DataError


@dataclass(frozen=True)
class ContingencyTable:
    """``counts[c, k]`` tokens with gold class ``c`` and predicted cluster ``k``."""

    counts: np.ndarray
    gold_labels: tuple = ()
    pred_labels: tuple = ()

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.min(initial=0) < 0 or counts.sum() < 1:
            raise DataError("contingency table must be a non-negative matrix with n >= 1")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


def build_contingency(gold, pred) -> ContingencyTable:
    """Cross-tabulate gold classes against predicted clusters.

    ``gold`` and ``pred`` are sequences of per-sentence label sequences with
    identical shapes.  Labels may be any hashable values; rows and columns
    follow sorted label order.
    """
    if len(gold) != len(pred):
        raise DataError(f"{len(gold)} gold sentences but {len(pred)} predicted")
    if len(gold) == 0:
        raise DataError("cannot evaluate an empty corpus")
    for k, (g, p) in enumerate(zip(gold, pred)):
        if len(g) != len(p):
            raise DataError(f"sentence {k}: {len(g)} gold tags but {len(p)} predictions")
    g = [x for s in gold for x in s]
    p = [x for s in pred for x in s]
    if not g:
        raise DataError("cannot evaluate an empty corpus")
    g_labels, g_idx = np.unique(np.asarray(g), return_inverse=True)
    p_labels, p_idx = np.unique(np.asarray(p), return_inverse=True)
    counts = np.zeros((len(g_labels), len(p_labels)), dtype=np.int64)
    np.add.at(counts, (g_idx, p_idx), 1)
    return ContingencyTable(counts, tuple(g_labels.tolist()), tuple(p_labels.tolist()))


def _entropy(counts, n):
    p = counts[counts > 0] / n
    return float(-np.sum(p * np.log(p)))


def _conditional_entropy(counts, n):
    """H(row variable | column variable) in nats."""
    col = counts.sum(axis=0)
    nz = counts > 0
    joint = counts[nz] / n
    cond = counts[nz] / np.broadcast_to(col, counts.shape)[nz]
    return float(-np.sum(joint * np.log(cond)))


def v_measure(table: ContingencyTable) -> tuple[float, float, float]:
    """Homogeneity, completeness and their harmonic mean (beta = 1)."""
    counts, n = table.counts, table.n
    h_c = _entropy(counts.sum(axis=1), n)
    h_k = _entropy(counts.sum(axis=0), n)
    homogeneity = 1.0 if h_c == 0 else 1.0 - _conditional_entropy(counts, n) / h_c
    completeness = 1.0 if h_k == 0 else 1.0 - _conditional_entropy(counts.T, n) / h_k
    # clip rounding noise just outside [0, 1]
    homogeneity = min(max(homogeneity, 0.0), 1.0)
    completeness = min(max(completeness, 0.0), 1.0)
    denom = homogeneity + completeness
    v = 0.0 if denom == 0 else 2.0 * homogeneity * completeness / denom
    return homogeneity, completeness, v


def many_to_one(table: ContingencyTable) -> float:
    """Accuracy after mapping each cluster to its majority gold class."""
    # argmax picks the lowest gold index on ties
    best = table.counts[np.argmax(table.counts, axis=0), np.arange(table.counts.shape[1])]
    return float(best.sum() / table.n)


def evaluate(gold, pred) -> dict[str, float]:
    table = build_contingency(gold, pred)
    h, c, v = v_measure(table)
    return {
        "v_measure": v,
        "homogeneity": h,
        "completeness": c,
        "many_to_one": many_to_one(table),
        "token_count": table.n,
    }
