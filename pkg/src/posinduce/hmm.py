"""First-order hidden Markov models for POS induction.

Two emission families are provided:

* :class:`MultinomialHMM` -- one categorical parameter per word type.
* :class:`GaussianHMM` -- each tag emits the pre-trained embedding of the
  word from a diagonal-covariance Gaussian.

Both are fit with Baum-Welch EM.  Inputs follow the hmmlearn convention: a
flat array of all tokens (``(n_tokens,)`` word ids, or ``(n_tokens, d)``
vectors) plus the per-sentence ``lengths``.
"""

from __future__ import annotations

import copy
import logging
import time
import warnings
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import lattice
from .exceptions import DataError, NumericalError
from .utils import check_sequences, split_sequences, substream

_log = logging.getLogger(__name__)

SMOOTHING = 1e-6
DECODE_MODES = ("viterbi", "posterior")
COVARIANCE_MODES = ("fixed", "estimated")


def _log0(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def gaussian_log_density(v, mean, variance_diag) -> float:
    """Log density of ``v`` under a diagonal Gaussian.

    Parameters
    ----------
    v, mean, variance_diag : array-like, shape (d,)

    Returns
    -------
    float
        ``-0.5 * sum_k [log(2 pi var_k) + (v_k - mean_k)**2 / var_k]``
    """
    v = np.asarray(v, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(variance_diag, dtype=np.float64)
    if not (v.shape == mean.shape == var.shape) or v.ndim != 1:
        raise DataError(f"dimension mismatch: {v.shape}, {mean.shape}, {var.shape}")
    if np.any(var <= 0):
        raise DataError("variances must be strictly positive")
    return float(-0.5 * np.sum(np.log(2 * np.pi * var) + (v - mean) ** 2 / var))


def gaussian_log_densities(X, means, variances) -> np.ndarray:
    """Vectorised :func:`gaussian_log_density`: ``out[n, t]`` for every row and tag."""
    X = np.asarray(X, dtype=np.float64)
    if X.shape[1] != means.shape[1]:
        raise DataError(f"observations have dimension {X.shape[1]}, model expects {means.shape[1]}")
    prec = 1.0 / variances
    const = np.sum(np.log(2 * np.pi * variances), axis=1) + np.sum(means ** 2 * prec, axis=1)
    quad = (X ** 2) @ prec.T - 2.0 * X @ (means * prec).T
    return -0.5 * (quad + const)


@dataclass
class TransitionParams:
    """Start distribution, transition matrix and per-tag stop probability.

    Each row of ``trans`` plus the matching ``stop`` entry sums to one.
    """

    start: np.ndarray
    trans: np.ndarray
    stop: np.ndarray


@dataclass
class SufficientStats:
    """Expected counts collected by :func:`e_step`.

    Gaussian models fill ``weighted_sum`` and ``weighted_sq`` (the diagonal of
    the weighted outer products); multinomial models fill ``word_counts``.
    Statistics from disjoint batches merge with ``+``.
    """

    start: np.ndarray
    transition: np.ndarray
    stop: np.ndarray
    occupancy: np.ndarray
    weighted_sum: np.ndarray | None = None
    weighted_sq: np.ndarray | None = None
    word_counts: np.ndarray | None = None

    def __add__(self, other: "SufficientStats") -> "SufficientStats":
        def add(a, b):
            return None if a is None else a + b

        return SufficientStats(
            self.start + other.start,
            self.transition + other.transition,
            self.stop + other.stop,
            self.occupancy + other.occupancy,
            add(self.weighted_sum, other.weighted_sum),
            add(self.weighted_sq, other.weighted_sq),
            add(self.word_counts, other.word_counts),
        )


def m_step_transitions(stats: SufficientStats, eps: float = SMOOTHING) -> TransitionParams:
    """Normalise expected start, transition and stop counts.

    A tag that was never occupied gets add-``eps`` smoothing over its
    outgoing row, which makes the row uniform.
    """
    start = np.array(stats.start, dtype=np.float64)
    counts = np.column_stack([stats.transition, stats.stop]).astype(np.float64)
    if start.sum() <= 0:
        start = start + eps
    totals = counts.sum(axis=1)
    empty = totals <= 0
    if empty.any():
        warnings.warn(f"tags {np.flatnonzero(empty).tolist()} have zero occupancy; smoothing")
        counts[empty] += eps
        totals = counts.sum(axis=1)
    rows = counts / totals[:, None]
    return TransitionParams(start / start.sum(), rows[:, :-1], rows[:, -1])


def m_step_gaussian_mean(stats: SufficientStats, old_means) -> np.ndarray:
    """Posterior-weighted average of the observed vectors, per tag.

    Tags with zero total weight keep their previous mean.
    """
    means = np.array(old_means, dtype=np.float64, copy=True)
    occ = stats.occupancy
    ok = occ > 0
    if not ok.all():
        warnings.warn(f"tags {np.flatnonzero(~ok).tolist()} have zero occupancy; means unchanged")
    means[ok] = stats.weighted_sum[ok] / occ[ok, None]
    return means


def m_step_gaussian_covariance(stats: SufficientStats, new_means, old_variances,
                               variance_floor: float = 1e-4) -> np.ndarray:
    """Posterior-weighted diagonal variance around ``new_means``, floored."""
    var = np.array(old_variances, dtype=np.float64, copy=True)
    occ = stats.occupancy
    ok = occ > 0
    second = stats.weighted_sq[ok] / occ[ok, None]
    var[ok] = second - new_means[ok] ** 2
    return np.maximum(var, variance_floor)


def m_step_multinomial(counts, eps: float = SMOOTHING) -> np.ndarray:
    counts = np.array(counts, dtype=np.float64, copy=True)
    totals = counts.sum(axis=1)
    empty = totals <= 0
    if empty.any():
        warnings.warn(f"rows {np.flatnonzero(empty).tolist()} have no counts; smoothing")
        counts[empty] += eps
        totals = counts.sum(axis=1)
    return counts / totals[:, None]


def _init_transitions(n_tags: int, rng: np.random.Generator) -> TransitionParams:
    """Uniform transitions with 1% multiplicative jitter."""
    start = 1.0 + 0.01 * rng.random(n_tags)
    rows = 1.0 + 0.01 * rng.random((n_tags, n_tags + 1))
    rows /= rows.sum(axis=1, keepdims=True)
    return TransitionParams(start / start.sum(), rows[:, :-1], rows[:, -1])


class _BaseHMM(BaseEstimator):
    """EM driver shared by the emission families.

    Subclasses implement ``_check_X``, ``_init_emissions``,
    ``_emission_logprob``, ``_accumulate`` and ``_m_step_emissions``.
    """

    def __init__(self, n_components=12, n_iter=100, tol=1e-5, n_init=1,
                 decode_mode="viterbi", random_state=None, verbose=False):
        self.n_components = n_components
        self.n_iter = n_iter
        self.tol = tol
        self.n_init = n_init
        self.decode_mode = decode_mode
        self.random_state = random_state
        self.verbose = verbose

    # -- parameters as log-potentials -------------------------------------

    def _log_transitions(self):
        return _log0(self.startprob_), _log0(self.transmat_), _log0(self.stopprob_)

    def _set_transitions(self, tp: TransitionParams):
        self.startprob_, self.transmat_, self.stopprob_ = tp.start, tp.trans, tp.stop

    def chain_potentials(self, x) -> lattice.ChainPotentials:
        """Generative log-potentials for a single sentence ``x``."""
        x = self._check_X(np.asarray(x))
        start, trans, stop = self._log_transitions()
        return lattice.ChainPotentials(start, trans, stop, self._emission_logprob(x))

    # -- EM ----------------------------------------------------------------

    def _validate_params(self):
        if int(self.n_components) < 2:
            raise ValueError("n_components must be at least 2")
        if self.decode_mode not in DECODE_MODES:
            raise ValueError(f"decode_mode must be one of {DECODE_MODES}")
        if self.n_iter < 0 or self.tol < 0 or self.n_init < 1:
            raise ValueError("n_iter and tol must be non-negative and n_init positive")

    def _run_em(self, X, lengths):
        trace, seconds = [], []
        tic = time.perf_counter()
        for it in range(self.n_iter):
            try:
                stats, ll = e_step(self, X, lengths)
            except NumericalError as exc:
                raise NumericalError(f"EM iteration {it + 1}: {exc}") from exc
            if not np.isfinite(ll):
                raise NumericalError(f"log-likelihood is {ll} at EM iteration {it + 1}")
            trace.append(ll)
            if self.verbose:
                _log.info("iteration %d  log-likelihood %.6f", it + 1, ll)
            self._set_transitions(m_step_transitions(stats))
            self._m_step_emissions(stats)
            seconds.append(time.perf_counter() - tic)
            # tol == 0 disables early stopping, so round-off wiggles cannot end a run
            if self.tol > 0 and len(trace) > 1:
                if trace[-1] - trace[-2] < self.tol * abs(trace[-2]):
                    break
        self.iteration_seconds_ = seconds
        return trace

    def fit(self, X, lengths=None):
        """Estimate parameters with EM, keeping the best of ``n_init`` restarts.

        Parameters
        ----------
        X : array-like
            Observations of all sentences concatenated.
        lengths : array-like of int, optional
            Sentence lengths; ``None`` treats ``X`` as one sentence.

        Returns
        -------
        self
        """
        self._validate_params()
        X, lengths = self._check_X(X), self._check_lengths(X, lengths)
        best = None
        for restart in range(self.n_init):
            rng = substream(self.random_state, "init", restart)
            self._set_transitions(_init_transitions(self.n_components, rng))
            self._init_emissions(X, rng)
            trace = self._run_em(X, lengths)
            final = trace[-1] if trace else -np.inf
            if best is None or final > best[0]:
                best = (final, trace, self._get_state())
        _, self.trace_, state = best
        self._set_state(state)
        self.n_iter_ = len(self.trace_)
        return self

    def _check_lengths(self, X, lengths):
        return check_sequences(np.asarray(X).reshape(len(X), -1), lengths)[1]

    def _get_state(self):
        return {k: copy.deepcopy(v) for k, v in vars(self).items() if k.endswith("_")}

    def _set_state(self, state):
        for k, v in state.items():
            setattr(self, k, v)

    # -- inference ---------------------------------------------------------

    def _posteriors(self, X, lengths):
        start, trans, stop = self._log_transitions()
        return lattice.batch_forward_backward(start, trans, stop, self._emission_logprob(X), lengths)

    def score(self, X, lengths=None) -> float:
        """Total log-likelihood of the sentences."""
        check_is_fitted(self, "startprob_")
        X = self._check_X(X)
        return float(self._posteriors(X, self._check_lengths(X, lengths)).log_partition.sum())

    def predict_proba(self, X, lengths=None) -> np.ndarray:
        check_is_fitted(self, "startprob_")
        X = self._check_X(X)
        return self._posteriors(X, self._check_lengths(X, lengths)).unary

    def predict(self, X, lengths=None) -> np.ndarray:
        """Tag ids for every token, decoded with ``decode_mode``."""
        X = self._check_X(X)
        lengths = self._check_lengths(X, lengths)
        return np.concatenate(decode(self, X, lengths, self.decode_mode))


def e_step(model: _BaseHMM, X, lengths) -> tuple[SufficientStats, float]:
    """Expected sufficient statistics and total log-likelihood.

    The lattice of each sentence uses generative potentials, so its log
    partition function is ``log p(sentence)``.
    """
    X = model._check_X(X)
    lengths = np.asarray(lengths, dtype=np.int64)
    try:
        post = model._posteriors(X, lengths)
    except NumericalError as exc:
        raise NumericalError(f"E-step failed: {exc}") from exc
    stats = SufficientStats(
        start=post.start_counts,
        transition=post.transition_counts,
        stop=post.stop_counts,
        occupancy=post.unary.sum(axis=0),
    )
    model._accumulate(stats, X, post.unary)
    return stats, float(post.log_partition.sum())


def decode(model: _BaseHMM, X, lengths, mode: str = "viterbi") -> list[np.ndarray]:
    """Predicted tag sequences, one array per sentence."""
    check_is_fitted(model, "startprob_")
    if mode not in DECODE_MODES:
        raise ValueError(f"mode must be one of {DECODE_MODES}")
    X = model._check_X(X)
    lengths = np.asarray(lengths, dtype=np.int64)
    if mode == "posterior":
        return split_sequences(np.argmax(model.predict_proba(X, lengths), axis=1), lengths)
    start, trans, stop = model._log_transitions()
    emission = model._emission_logprob(X)
    return [
        lattice.viterbi(lattice.ChainPotentials(start, trans, stop, em))[0]
        for em in split_sequences(emission, lengths)
    ]


class GaussianHMM(_BaseHMM):
    """HMM whose tags emit word embeddings from diagonal Gaussians.

    Parameters
    ----------
    n_components : int
        Number of tags.
    covariance_mode : {"fixed", "estimated"}
        ``"fixed"`` holds every variance at ``fixed_variance``; ``"estimated"``
        re-estimates the diagonal each M-step and floors it at
        ``variance_floor``.
    fixed_variance : float
        Initial (and, when fixed, permanent) per-dimension variance.
    variance_floor : float
    means_init : array, shape (n_components, n_features), optional
        Starting means.  When omitted, means are drawn uniformly from
        ``[-1, 1]``.
    n_iter, tol : int, float
        EM stops after ``n_iter`` iterations or when the relative
        log-likelihood gain drops below ``tol``; ``tol=0`` always runs all
        ``n_iter`` iterations.
    n_init : int
        Random restarts; the run with the highest final log-likelihood wins.
    decode_mode : {"viterbi", "posterior"}
    random_state : int or None

    Attributes
    ----------
    startprob_, transmat_, stopprob_ : arrays
    means_, variances_ : arrays, shape (n_components, n_features)
    trace_ : list of float
        Log-likelihood at the start of every EM iteration.
    iteration_seconds_ : list of float
        Wall-clock time elapsed at the end of each iteration.
    """

    def __init__(self, n_components=12, covariance_mode="fixed", fixed_variance=0.45,
                 variance_floor=1e-4, means_init=None, n_iter=100, tol=1e-5, n_init=1,
                 decode_mode="viterbi", random_state=None, verbose=False):
        super().__init__(n_components=n_components, n_iter=n_iter, tol=tol, n_init=n_init,
                         decode_mode=decode_mode, random_state=random_state, verbose=verbose)
        self.covariance_mode = covariance_mode
        self.fixed_variance = fixed_variance
        self.variance_floor = variance_floor
        self.means_init = means_init

    def _check_X(self, X):
        X, _ = check_sequences(X, None, dtype=np.float64)
        if hasattr(self, "n_features_in_") and X.shape[1] != self.n_features_in_:
            raise DataError(
                f"observations have dimension {X.shape[1]}, model expects {self.n_features_in_}"
            )
        return X

    def _validate_params(self):
        super()._validate_params()
        if self.covariance_mode not in COVARIANCE_MODES:
            raise ValueError(f"covariance_mode must be one of {COVARIANCE_MODES}")
        if self.fixed_variance <= 0 or self.variance_floor <= 0:
            raise ValueError("variances must be positive")

    def fit(self, X, lengths=None):
        for attr in ("n_features_in_", "means_", "variances_"):
            self.__dict__.pop(attr, None)
        return super().fit(X, lengths)

    def _init_emissions(self, X, rng):
        d = X.shape[1]
        self.n_features_in_ = d
        if self.means_init is not None:
            means = np.array(self.means_init, dtype=np.float64)
            if means.shape != (self.n_components, d):
                raise DataError(f"means_init must have shape {(self.n_components, d)}")
            self.means_ = means
        else:
            self.means_ = rng.uniform(-1.0, 1.0, size=(self.n_components, d))
        self.variances_ = np.full((self.n_components, d), float(self.fixed_variance))

    def _emission_logprob(self, X):
        return gaussian_log_densities(X, self.means_, self.variances_)

    def _accumulate(self, stats, X, unary):
        stats.weighted_sum = unary.T @ X
        stats.weighted_sq = unary.T @ (X ** 2)

    def _m_step_emissions(self, stats):
        self.means_ = m_step_gaussian_mean(stats, self.means_)
        if self.covariance_mode == "estimated":
            self.variances_ = m_step_gaussian_covariance(
                stats, self.means_, self.variances_, self.variance_floor)


class MultinomialHMM(_BaseHMM):
    """HMM with a categorical distribution over word ids per tag.

    ``X`` holds integer word ids; ``-1`` marks a word unseen in training,
    which is given the same emission score under every tag.  Emission rows
    are initialised from a symmetric Dirichlet(1).

    Parameters
    ----------
    n_features : int, optional
        Vocabulary size.  Inferred as ``max(X) + 1`` when omitted.

    Other parameters are as for :class:`GaussianHMM`.
    """

    def __init__(self, n_components=12, n_features=None, n_iter=100, tol=1e-5, n_init=1,
                 decode_mode="viterbi", random_state=None, verbose=False):
        super().__init__(n_components=n_components, n_iter=n_iter, tol=tol, n_init=n_init,
                         decode_mode=decode_mode, random_state=random_state, verbose=verbose)
        self.n_features = n_features

    def _check_X(self, X):
        X = np.asarray(X)
        if X.ndim == 2 and X.shape[1] == 1:
            X = X[:, 0]
        if X.ndim != 1 or (X.size and not np.issubdtype(X.dtype, np.integer)):
            raise DataError("MultinomialHMM expects a 1-d array of integer word ids")
        X = X.astype(np.int64)
        if X.size and X.min() < -1:
            raise DataError("word ids must be >= -1")
        vocab = getattr(self, "n_features_", self.n_features)
        if vocab is not None and X.size and X.max() >= vocab:
            raise DataError(f"word id {int(X.max())} outside vocabulary of size {vocab}")
        return X

    def _check_lengths(self, X, lengths):
        return check_sequences(np.asarray(X).reshape(len(X), 1), lengths)[1]

    def fit(self, X, lengths=None):
        self.__dict__.pop("n_features_", None)
        return super().fit(X, lengths)

    def _init_emissions(self, X, rng):
        self.n_features_ = int(self.n_features or X.max() + 1)
        self.emissionprob_ = rng.dirichlet(np.ones(self.n_features_), size=self.n_components)

    def _emission_logprob(self, X):
        known = X >= 0
        out = np.zeros((len(X), self.n_components))
        out[known] = _log0(self.emissionprob_[:, X[known]]).T
        return out

    def _accumulate(self, stats, X, unary):
        counts = np.zeros((self.n_components, self.n_features_))
        known = X >= 0
        np.add.at(counts.T, X[known], unary[known])
        stats.word_counts = counts

    def _m_step_emissions(self, stats):
        self.emissionprob_ = m_step_multinomial(stats.word_counts)


def seed_means(model: GaussianHMM, labeled_sample, table, k: int = 10,
               random_state=None) -> GaussianHMM:
    """Copy of ``model`` with each tag's mean set to the centroid of ``k`` words.

    Parameters
    ----------
    labeled_sample : mapping of tag id -> list of words
    table : EmbeddingTable
    k : int
        Words sampled (without replacement) per tag among those present in
        ``table``.
    """
    if not isinstance(model, GaussianHMM):
        raise DataError("seed_means requires a Gaussian-emission model")
    if table.dim != model.means_.shape[1]:
        raise DataError(f"table dimension {table.dim} != model dimension {model.means_.shape[1]}")
    rng = substream(random_state, "seed_means")
    means = model.means_.copy()
    for tag in sorted(labeled_sample):
        words = [w for w in dict.fromkeys(labeled_sample[tag]) if w in table]
        if len(words) < k:
            raise DataError(f"tag {tag!r} has {len(words)} words in the table, need {k}")
        picked = rng.choice(len(words), size=k, replace=False)
        means[tag] = np.mean([table.lookup(words[i]) for i in sorted(picked)], axis=0)
    seeded = copy.deepcopy(model)
    seeded.means_ = means
    return seeded


def nearest_words(model: GaussianHMM, table, tag: int, n: int) -> list[str]:
    """The ``n`` table words closest (Euclidean) to the mean of ``tag``."""
    dist = np.sqrt(np.sum((table.matrix - model.means_[tag]) ** 2, axis=1))
    order = np.lexsort((np.array(table.words), dist))
    return [table.words[i] for i in order[:n]]
