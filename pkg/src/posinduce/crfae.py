"""CRF autoencoder for POS induction.

A linear-chain CRF encodes the token sequence into latent tags and a
per-position reconstruction model regenerates a view of each token from its
tag: the word's embedding under a diagonal Gaussian, or a discrete label
(e.g. a Brown cluster id) under a categorical distribution.  Training
maximises ``sum_sentences log sum_y p(y | x) p(x_hat | y)`` by block
coordinate ascent: gradient steps on the encoder weights, then a closed-form
EM update of the reconstruction parameters.
"""

from __future__ import annotations

import copy
import logging
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import lattice
from .exceptions import DataError, NumericalError
from .hmm import (
    COVARIANCE_MODES,
    DECODE_MODES,
    SufficientStats,
    _log0,
    gaussian_log_densities,
    m_step_gaussian_covariance,
    m_step_gaussian_mean,
    m_step_multinomial,
)
from .utils import split_sequences, substream

_log = logging.getLogger(__name__)

TEMPLATES = (
    "word", "lower", "suffix1", "suffix2", "suffix3", "prefix1",
    "digit", "hyphen", "capital", "shape",
)
RECONSTRUCTIONS = ("gaussian", "multinomial")
START = -1


def word_shape(word: str) -> str:
    out = []
    for ch in word:
        c = "X" if ch.isupper() else "x" if ch.islower() else "d" if ch.isdigit() else ch
        if not out or out[-1] != c:
            out.append(c)
    return "".join(out)


def _observation_features(word: str, templates) -> list[str]:
    feats = []
    for name in templates:
        if name == "word":
            feats.append("w=" + word)
        elif name == "lower":
            feats.append("lw=" + word.lower())
        elif name.startswith("suffix"):
            k = int(name[-1])
            if len(word) >= k:
                feats.append(f"s{k}=" + word[-k:])
        elif name == "prefix1":
            feats.append("p1=" + word[:1])
        elif name == "digit":
            if any(ch.isdigit() for ch in word):
                feats.append("digit")
        elif name == "hyphen":
            if "-" in word:
                feats.append("hyphen")
        elif name == "capital":
            if word[:1].isupper():
                feats.append("cap")
        elif name == "shape":
            feats.append("shape=" + word_shape(word))
        else:
            raise ValueError(f"unknown feature template {name!r}")
    return feats


class FeatureExtractor:
    """Sparse binary features of a (position, tag, previous tag) triple.

    Word-level observation strings are interned once by :meth:`fit` and
    frozen.  Every observation is conjoined with every tag, so feature
    ``o * n_tags + t`` is observation ``o`` firing with tag ``t``; the
    ``(n_tags + 1) * n_tags`` transition features follow, with row 0
    reserved for the start symbol.
    """

    def __init__(self, n_tags: int, templates=TEMPLATES):
        self.n_tags = int(n_tags)
        self.templates = tuple(templates)
        for name in self.templates:
            _observation_features("x", (name,))
        self.observations: list[str] = []
        self.obs_index: dict[str, int] = {}
        self.frozen = False

    def fit(self, sentences):
        if self.frozen:
            raise RuntimeError("feature index is frozen")
        for words in sentences:
            for w in words:
                for f in _observation_features(w, self.templates):
                    if f not in self.obs_index:
                        self.obs_index[f] = len(self.observations)
                        self.observations.append(f)
        self.frozen = True
        return self

    @classmethod
    def from_observations(cls, n_tags, templates, observations):
        ext = cls(n_tags, templates)
        ext.observations = list(observations)
        ext.obs_index = {f: i for i, f in enumerate(ext.observations)}
        ext.frozen = True
        return ext

    @property
    def n_observations(self) -> int:
        return len(self.observations)

    @property
    def n_features(self) -> int:
        return (self.n_observations + self.n_tags + 1) * self.n_tags

    @property
    def transition_offset(self) -> int:
        return self.n_observations * self.n_tags

    @property
    def feature_index(self) -> dict[str, int]:
        T = self.n_tags
        index = {f"{o}|t={t}": k * T + t for k, o in enumerate(self.observations) for t in range(T)}
        for prev in range(START, T):
            name = "<s>" if prev == START else str(prev)
            for t in range(T):
                index[f"trans={name}->{t}"] = self.transition_id(prev, t)
        return index

    def transition_id(self, prev_tag: int, tag: int) -> int:
        return self.transition_offset + (prev_tag + 1) * self.n_tags + tag

    def observation_ids(self, word: str) -> list[int]:
        index = self.obs_index
        return [index[f] for f in _observation_features(word, self.templates) if f in index]

    def extract(self, words, i: int, tag: int, prev_tag: int | None = None) -> list[int]:
        if i == 0 or prev_tag is None:
            prev_tag = START
        T = self.n_tags
        ids = [o * T + tag for o in self.observation_ids(words[i])]
        ids.append(self.transition_id(prev_tag, tag))
        return ids

    def design_matrix(self, sentences) -> sp.csr_matrix:
        """Token-by-observation indicator matrix over all sentences."""
        indptr, indices = [0], []
        cache: dict[str, list[int]] = {}
        for words in sentences:
            for w in words:
                ids = cache.get(w)
                if ids is None:
                    ids = cache[w] = sorted(set(self.observation_ids(w)))
                indices.extend(ids)
                indptr.append(len(indices))
        data = np.ones(len(indices))
        return sp.csr_matrix((data, indices, indptr), shape=(len(indptr) - 1, self.n_observations))


def extract_features(extractor: FeatureExtractor, words, i, tag, prev_tag=None) -> list[int]:
    return extractor.extract(words, i, tag, prev_tag)


@dataclass
class _Batch:
    design: sp.csr_matrix
    lengths: np.ndarray
    targets: np.ndarray


class CRFAutoencoder(BaseEstimator):
    """CRF autoencoder with Gaussian or multinomial reconstructions.

    Parameters
    ----------
    n_components : int
        Number of tags.
    reconstruction : {"gaussian", "multinomial"}
        Gaussian reconstructions regenerate embedding vectors; multinomial
        reconstructions regenerate integer labels.
    templates : tuple of str, optional
        Active observation templates; defaults to :data:`TEMPLATES`.
    covariance_mode, fixed_variance, variance_floor :
        As in :class:`~posinduce.hmm.GaussianHMM`.
    n_labels : int, optional
        Size of the multinomial reconstruction alphabet; inferred when
        omitted.
    n_iter : int
        Outer block-coordinate iterations.
    inner_steps : int
        Gradient ascent steps on the encoder per outer iteration.
    step_size : float
        Learning rate applied to the gradient averaged over sentences.
    l2 : float
        Coefficient ``c`` of the ``-c * ||weights||^2`` penalty.
    tol : float
        Stop when the relative change of the objective falls below ``tol``;
        ``tol=0`` always runs all ``n_iter`` outer iterations.
    n_init : int
        Random restarts; the highest final objective wins.
    decode_mode : {"viterbi", "posterior"}
    random_state : int or None

    Attributes
    ----------
    extractor_ : FeatureExtractor
    coef_ : array, shape (n_features,)
        Encoder weights.
    means_, variances_ : arrays
        Gaussian reconstruction parameters.
    reconstructionprob_ : array, shape (n_components, n_labels)
        Multinomial reconstruction parameters.
    trace_ : list of float
        Objective after every outer iteration.
    """

    def __init__(self, n_components=12, reconstruction="gaussian", templates=None,
                 covariance_mode="fixed", fixed_variance=0.45, variance_floor=1e-4,
                 n_labels=None, n_iter=50, inner_steps=5, step_size=0.1, l2=0.0, tol=1e-5,
                 n_init=1, decode_mode="viterbi", random_state=None, verbose=False):
        self.n_components = n_components
        self.reconstruction = reconstruction
        self.templates = templates
        self.covariance_mode = covariance_mode
        self.fixed_variance = fixed_variance
        self.variance_floor = variance_floor
        self.n_labels = n_labels
        self.n_iter = n_iter
        self.inner_steps = inner_steps
        self.step_size = step_size
        self.l2 = l2
        self.tol = tol
        self.n_init = n_init
        self.decode_mode = decode_mode
        self.random_state = random_state
        self.verbose = verbose

    # -- validation --------------------------------------------------------

    def _validate_params(self):
        if int(self.n_components) < 2:
            raise ValueError("n_components must be at least 2")
        if self.reconstruction not in RECONSTRUCTIONS:
            raise ValueError(f"reconstruction must be one of {RECONSTRUCTIONS}")
        if self.covariance_mode not in COVARIANCE_MODES:
            raise ValueError(f"covariance_mode must be one of {COVARIANCE_MODES}")
        if self.decode_mode not in DECODE_MODES:
            raise ValueError(f"decode_mode must be one of {DECODE_MODES}")
        if min(self.n_iter, self.inner_steps, self.l2, self.tol) < 0 or self.n_init < 1:
            raise ValueError("iteration counts, l2 and tol must be non-negative")

    def _check_targets(self, X, y):
        if len(X) != len(y):
            raise DataError(f"{len(X)} sentences but {len(y)} target sequences")
        lengths = np.array([len(s) for s in X], dtype=np.int64)
        if lengths.size == 0 or lengths.min() < 1:
            raise DataError("every sentence must have at least one token")
        for k, (s, t) in enumerate(zip(X, y)):
            if len(s) != len(t):
                raise DataError(f"sentence {k}: {len(s)} tokens but {len(t)} targets")
        if self.reconstruction == "gaussian":
            targets = np.vstack([np.asarray(t, dtype=np.float64).reshape(len(t), -1) for t in y])
            d = getattr(self, "means_", None)
            if d is not None and targets.shape[1] != d.shape[1]:
                raise DataError(
                    f"targets have dimension {targets.shape[1]}, model expects {d.shape[1]}")
        else:
            targets = np.concatenate([np.asarray(t).ravel() for t in y])
            if not np.issubdtype(targets.dtype, np.integer):
                raise DataError("multinomial reconstruction targets must be integer labels")
            targets = targets.astype(np.int64)
        return lengths, targets

    def _batch(self, X, y) -> _Batch:
        lengths, targets = self._check_targets(X, y)
        return _Batch(self.extractor_.design_matrix(X), lengths, targets)

    # -- potentials --------------------------------------------------------

    def _split_weights(self, weights):
        T = self.n_components
        O = self.extractor_.n_observations
        W = weights[: O * T].reshape(O, T)
        trans = weights[O * T:].reshape(T + 1, T)
        return W, trans[0], trans[1:]

    def _reconstruction_logprob(self, targets):
        if self.reconstruction == "gaussian":
            return gaussian_log_densities(targets, self.means_, self.variances_)
        out = np.zeros((len(targets), self.n_components))
        known = (targets >= 0) & (targets < self.reconstructionprob_.shape[1])
        out[known] = _log0(self.reconstructionprob_[:, targets[known]]).T
        return out

    def _lattices(self, weights, batch, joint=True, encoder=True):
        W, start, trans = self._split_weights(weights)
        em = np.asarray(batch.design @ W)
        stop = np.zeros(self.n_components)
        enc = lattice.batch_forward_backward(start, trans, stop, em, batch.lengths) if encoder else None
        jnt = None
        if joint:
            em_joint = em + self._reconstruction_logprob(batch.targets)
            jnt = lattice.batch_forward_backward(start, trans, stop, em_joint, batch.lengths)
        return enc, jnt

    def _objective_and_gradient(self, weights, batch):
        enc, jnt = self._lattices(weights, batch)
        obj = float(jnt.log_partition.sum() - enc.log_partition.sum())
        obj -= self.l2 * float(weights @ weights)
        if not np.isfinite(obj):
            bad = np.flatnonzero(~np.isfinite(jnt.log_partition - enc.log_partition))
            where = f" (sentence {int(bad[0])})" if bad.size else ""
            raise NumericalError(f"objective is {obj}{where}")
        grad_W = np.asarray(batch.design.T @ (jnt.unary - enc.unary))
        grad_trans = np.vstack([jnt.start_counts - enc.start_counts,
                                jnt.transition_counts - enc.transition_counts])
        grad = np.concatenate([grad_W.ravel(), grad_trans.ravel()])
        grad -= 2.0 * self.l2 * weights
        return obj, grad

    def _m_step_reconstruction(self, batch):
        _, jnt = self._lattices(self.coef_, batch, encoder=False)
        u = jnt.unary
        if self.reconstruction == "gaussian":
            X = batch.targets
            stats = SufficientStats(jnt.start_counts, jnt.transition_counts, jnt.stop_counts,
                                    u.sum(axis=0), u.T @ X, u.T @ (X ** 2))
            self.means_ = m_step_gaussian_mean(stats, self.means_)
            if self.covariance_mode == "estimated":
                self.variances_ = m_step_gaussian_covariance(
                    stats, self.means_, self.variances_, self.variance_floor)
        else:
            counts = np.zeros_like(self.reconstructionprob_)
            np.add.at(counts.T, batch.targets, u)
            self.reconstructionprob_ = m_step_multinomial(counts)

    # -- training ----------------------------------------------------------

    def _init_params(self, batch, rng):
        T = self.n_components
        self.coef_ = rng.uniform(-1.0, 1.0, size=self.extractor_.n_features)
        if self.reconstruction == "gaussian":
            d = batch.targets.shape[1]
            self.means_ = rng.uniform(-1.0, 1.0, size=(T, d))
            self.variances_ = np.full((T, d), float(self.fixed_variance))
        else:
            R = int(self.n_labels or batch.targets.max() + 1)
            self.reconstructionprob_ = rng.dirichlet(np.ones(R), size=T)

    def _run(self, batch):
        trace, seconds = [], []
        tic = time.perf_counter()
        # steps follow the per-sentence mean gradient so the effective rate
        # does not grow with corpus size
        rate = self.step_size / len(batch.lengths)
        for it in range(self.n_iter):
            for _ in range(self.inner_steps):
                _, grad = self._objective_and_gradient(self.coef_, batch)
                self.coef_ = self.coef_ + rate * grad
            self._m_step_reconstruction(batch)
            obj, _ = self._objective_and_gradient(self.coef_, batch)
            if self.verbose:
                _log.info("outer iteration %d  objective %.6f", it + 1, obj)
            if trace and obj < trace[-1] - 1e-6:
                warnings.warn(f"objective decreased at outer iteration {it + 1}: "
                              f"{trace[-1]:.6f} -> {obj:.6f}")
            trace.append(obj)
            seconds.append(time.perf_counter() - tic)
            if self.tol > 0 and len(trace) > 1:
                if abs(trace[-1] - trace[-2]) < self.tol * abs(trace[-2]):
                    break
        self.iteration_seconds_ = seconds
        return trace

    def _state(self):
        return {k: copy.deepcopy(v) for k, v in vars(self).items()
                if k.endswith("_") and k != "extractor_"}

    def fit(self, X, y):
        """Train on token sequences ``X`` with reconstruction targets ``y``.

        Parameters
        ----------
        X : list of list of str
            Token strings per sentence.
        y : list of arrays
            Per sentence, an ``(length, d)`` array of embeddings (gaussian)
            or a ``(length,)`` array of integer labels (multinomial).
        """
        self._validate_params()
        for attr in ("means_", "variances_", "reconstructionprob_"):
            self.__dict__.pop(attr, None)
        templates = TEMPLATES if self.templates is None else tuple(self.templates)
        self.extractor_ = FeatureExtractor(self.n_components, templates).fit(X)
        batch = self._batch(X, y)
        best = None
        for restart in range(self.n_init):
            rng = substream(self.random_state, "init", restart)
            self._init_params(batch, rng)
            trace = self._run(batch)
            final = trace[-1] if trace else -np.inf
            if best is None or final > best[0]:
                best = (final, trace, self._state())
        _, self.trace_, state = best
        for k, v in state.items():
            setattr(self, k, v)
        self.n_iter_ = len(self.trace_)
        return self

    # -- inference ---------------------------------------------------------

    def score(self, X, y) -> float:
        """Objective (log marginal reconstruction likelihood minus penalty)."""
        check_is_fitted(self, "coef_")
        return objective_and_gradient(self, X, y)[0]

    def predict_proba(self, X, y) -> np.ndarray:
        check_is_fitted(self, "coef_")
        _, jnt = self._lattices(self.coef_, self._batch(X, y), encoder=False)
        return jnt.unary

    def predict(self, X, y) -> np.ndarray:
        return np.concatenate(decode(self, X, y, self.decode_mode))


def encoder_potentials(model: CRFAutoencoder, words, weights=None) -> lattice.ChainPotentials:
    """Unnormalised encoder log-potentials ``weights . f`` for one sentence."""
    weights = model.coef_ if weights is None else np.asarray(weights, dtype=np.float64)
    W, start, trans = model._split_weights(weights)
    em = np.asarray(model.extractor_.design_matrix([words]) @ W)
    return lattice.ChainPotentials(start, trans, np.zeros(model.n_components), em)


def joint_potentials(model: CRFAutoencoder, words, targets, weights=None) -> lattice.ChainPotentials:
    """Encoder potentials plus per-position reconstruction log-densities."""
    enc = encoder_potentials(model, words, weights)
    _, flat = model._check_targets([words], [targets])
    em = enc.emission + model._reconstruction_logprob(flat)
    return lattice.ChainPotentials(enc.start, enc.transition, enc.stop, em)


def joint_posteriors(model: CRFAutoencoder, words, targets) -> lattice.Posteriors:
    """Tag posteriors conditioned on both the tokens and their reconstructions."""
    return lattice.forward_backward(joint_potentials(model, words, targets))


def objective_and_gradient(model: CRFAutoencoder, X, y, weights=None) -> tuple[float, np.ndarray]:
    """Objective and its gradient with respect to the encoder weights.

    The objective is ``sum_s [log Z_joint(s) - log Z_encoder(s)] - l2 * ||w||^2``
    and the gradient is the difference of expected feature counts under the
    two lattices.  Reconstruction parameters are held fixed.
    """
    check_is_fitted(model, "extractor_")
    weights = model.coef_ if weights is None else np.asarray(weights, dtype=np.float64)
    return model._objective_and_gradient(weights, model._batch(X, y))


def decode(model: CRFAutoencoder, X, y, mode: str = "viterbi") -> list[np.ndarray]:
    """Predicted tag sequences over the joint (encoder + reconstruction) lattice."""
    check_is_fitted(model, "coef_")
    if mode not in DECODE_MODES:
        raise ValueError(f"mode must be one of {DECODE_MODES}")
    batch = model._batch(X, y)
    if mode == "posterior":
        _, jnt = model._lattices(model.coef_, batch, encoder=False)
        return split_sequences(np.argmax(jnt.unary, axis=1), batch.lengths)
    W, start, trans = model._split_weights(model.coef_)
    em = np.asarray(batch.design @ W) + model._reconstruction_logprob(batch.targets)
    stop = np.zeros(model.n_components)
    return [lattice.viterbi(lattice.ChainPotentials(start, trans, stop, e))[0]
            for e in split_sequences(em, batch.lengths)]
