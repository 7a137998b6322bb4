import warnings

import numpy as np
import pytest
from sklearn.base import clone

from posinduce.datasets import make_gaussian_hmm_corpus
from posinduce.embeddings import EmbeddingTable
from posinduce.exceptions import DataError, NumericalError
from posinduce.hmm import (
    GaussianHMM,
    MultinomialHMM,
    SufficientStats,
    decode,
    e_step,
    gaussian_log_density,
    gaussian_log_densities,
    m_step_gaussian_covariance,
    m_step_gaussian_mean,
    m_step_multinomial,
    m_step_transitions,
    nearest_words,
    seed_means,
)
from posinduce.lattice import ChainPotentials, enumerate_scores, posterior_decode, viterbi
from posinduce.metrics import evaluate


def _stats(weights, X):
    """Single-tag statistics from explicit per-observation weights."""
    w = np.asarray(weights, dtype=float)[:, None]
    X = np.asarray(X, dtype=float)
    T = 1
    return SufficientStats(np.ones(T), np.zeros((T, T)), np.ones(T), w.sum(axis=0),
                           w.T @ X, w.T @ X ** 2)


def _fitted_gaussian(rng, T=2, d=2):
    m = GaussianHMM(n_components=T, n_iter=0)
    m.startprob_ = rng.dirichlet(np.ones(T))
    rows = rng.dirichlet(np.ones(T + 1), size=T)
    m.transmat_, m.stopprob_ = rows[:, :-1], rows[:, -1]
    m.means_ = rng.normal(size=(T, d))
    m.variances_ = rng.uniform(0.3, 2.0, size=(T, d))
    m.n_features_in_ = d
    return m


# -- densities -----------------------------------------------------------------


def test_standard_normal_density_at_mode():
    assert gaussian_log_density([0.0], [0.0], [1.0]) == pytest.approx(-0.9189385332, abs=1e-9)


def test_fixed_variance_density_at_mode():
    v = gaussian_log_density([0, 0], [0, 0], [0.45, 0.45])
    assert v == pytest.approx(-np.log(2 * np.pi * 0.45), abs=1e-14)
    assert v == pytest.approx(-1.0394, abs=1e-4)


def test_density_errors():
    with pytest.raises(DataError):
        gaussian_log_density([0, 0], [0], [1])
    with pytest.raises(DataError):
        gaussian_log_density([0], [0], [0.0])


def test_vectorised_density_agrees(rng):
    X, means, var = rng.normal(size=(7, 3)), rng.normal(size=(4, 3)), rng.uniform(0.1, 2, (4, 3))
    out = gaussian_log_densities(X, means, var)
    for n in range(7):
        for t in range(4):
            assert out[n, t] == pytest.approx(gaussian_log_density(X[n], means[t], var[t]),
                                              abs=1e-12)


# -- E-step --------------------------------------------------------------------


def test_e_step_symmetric_model_splits_evenly():
    m = GaussianHMM(n_components=2)
    m.startprob_ = np.array([0.5, 0.5])
    m.transmat_ = np.full((2, 2), 0.25)
    m.stopprob_ = np.array([0.5, 0.5])
    m.means_ = np.zeros((2, 1))
    m.variances_ = np.ones((2, 1))
    X = np.array([[0.3], [-1.0], [2.0]])
    stats, _ = e_step(m, X, [3])
    np.testing.assert_allclose(m.predict_proba(X, [3]), 0.5)
    np.testing.assert_allclose(stats.occupancy, [1.5, 1.5])
    np.testing.assert_allclose(stats.transition, np.full((2, 2), 0.5))


def test_e_step_matches_enumeration(rng):
    for _ in range(10):
        T, d = int(rng.integers(2, 4)), 2
        m = _fitted_gaussian(rng, T, d)
        lengths = rng.integers(1, 6, size=3)
        X = rng.normal(size=(lengths.sum(), d))
        stats, ll = e_step(m, X, lengths)
        # oracle: joint probability of every tag sequence, per sentence
        start, trans, stop = np.log(m.startprob_), np.log(m.transmat_), np.log(m.stopprob_)
        em = gaussian_log_densities(X, m.means_, m.variances_)
        occ, tc, sc, ec = np.zeros(T), np.zeros((T, T)), np.zeros(T), np.zeros(T)
        wsum, wsq = np.zeros((T, d)), np.zeros((T, d))
        total = 0.0
        off = 0
        for L in lengths:
            seqs, scores = enumerate_scores(ChainPotentials(start, trans, stop, em[off:off + L]))
            lz = np.log(np.exp(scores).sum())
            total += lz
            w = np.exp(scores - lz)
            for s, p in zip(seqs, w):
                sc[s[0]] += p
                ec[s[-1]] += p
                for i, t in enumerate(s):
                    occ[t] += p
                    wsum[t] += p * X[off + i]
                    wsq[t] += p * X[off + i] ** 2
                for a, b in zip(s[:-1], s[1:]):
                    tc[a, b] += p
            off += L
        assert ll == pytest.approx(total, abs=1e-10)
        for got, want in [(stats.occupancy, occ), (stats.transition, tc), (stats.start, sc),
                          (stats.stop, ec), (stats.weighted_sum, wsum), (stats.weighted_sq, wsq)]:
            np.testing.assert_allclose(got, want, atol=1e-10, rtol=0)


def test_stats_merge_equals_joint_e_step(rng):
    m = _fitted_gaussian(rng, 3, 2)
    X = rng.normal(size=(9, 2))
    a, _ = e_step(m, X[:4], [4])
    b, _ = e_step(m, X[4:], [5])
    both, _ = e_step(m, X, [4, 5])
    merged = a + b
    np.testing.assert_allclose(merged.transition, both.transition, atol=1e-12)
    np.testing.assert_allclose(merged.weighted_sum, both.weighted_sum, atol=1e-12)


# -- M-steps -------------------------------------------------------------------


def test_transition_normalisation():
    stats = SufficientStats(np.array([1.0, 3.0]), np.array([[3.0, 1.0], [2.0, 2.0]]),
                            np.zeros(2), np.ones(2))
    tp = m_step_transitions(stats)
    np.testing.assert_allclose(tp.trans, [[0.75, 0.25], [0.5, 0.5]], atol=1e-15)
    np.testing.assert_array_equal(tp.stop, [0.0, 0.0])
    np.testing.assert_allclose(tp.start, [0.25, 0.75])


def test_transition_zero_row_is_smoothed_to_uniform():
    stats = SufficientStats(np.array([1.0, 0.0]), np.array([[1.0, 0.0], [0.0, 0.0]]),
                            np.array([1.0, 0.0]), np.array([2.0, 0.0]))
    with pytest.warns(UserWarning, match="zero occupancy"):
        tp = m_step_transitions(stats)
    np.testing.assert_allclose(np.append(tp.trans[1], tp.stop[1]), np.full(3, 1 / 3))


def test_transition_deterministic_sequence():
    # tag sequence 0 1 0 1 as hard counts
    stats = SufficientStats(np.array([1.0, 0.0]), np.array([[0.0, 2.0], [1.0, 0.0]]),
                            np.array([0.0, 1.0]), np.array([2.0, 2.0]))
    tp = m_step_transitions(stats)
    np.testing.assert_array_equal(tp.trans, [[0.0, 1.0], [0.5, 0.0]])
    np.testing.assert_array_equal(tp.start, [1.0, 0.0])


def test_mean_unit_weights_is_arithmetic_mean(rng):
    X = rng.normal(size=(5, 3))
    mu = m_step_gaussian_mean(_stats(np.ones(5), X), np.zeros((1, 3)))
    np.testing.assert_allclose(mu[0], X.mean(axis=0), atol=1e-14)


def test_mean_weighted_example():
    mu = m_step_gaussian_mean(_stats([0.25, 0.75], [[1, 0], [0, 1]]), np.zeros((1, 2)))
    assert np.max(np.abs(mu[0] - [0.25, 0.75])) <= 1e-12


def test_mean_zero_weight_is_unchanged():
    with pytest.warns(UserWarning):
        mu = m_step_gaussian_mean(_stats([0.0, 0.0], [[1, 0], [0, 1]]), np.array([[7.0, 8.0]]))
    np.testing.assert_array_equal(mu, [[7.0, 8.0]])


def test_variance_examples():
    s = _stats([0.5, 0.5], [[-1.0], [1.0]])
    var = m_step_gaussian_covariance(s, np.zeros((1, 1)), np.ones((1, 1)))
    assert abs(var[0, 0] - 1.0) <= 1e-12
    s = _stats([1.0, 3.0], [[0.0], [4.0]])
    mu = m_step_gaussian_mean(s, np.zeros((1, 1)))
    var = m_step_gaussian_covariance(s, mu, np.ones((1, 1)))
    assert abs(mu[0, 0] - 3.0) <= 1e-12 and abs(var[0, 0] - 3.0) <= 1e-12


def test_variance_single_observation_hits_floor():
    s = _stats([1.0], [[2.5, -1.0]])
    mu = m_step_gaussian_mean(s, np.zeros((1, 2)))
    var = m_step_gaussian_covariance(s, mu, np.ones((1, 2)), variance_floor=1e-4)
    np.testing.assert_array_equal(var, [[1e-4, 1e-4]])


def test_multinomial_m_step():
    with pytest.warns(UserWarning):
        out = m_step_multinomial([[1.0, 3.0], [0.0, 0.0]])
    np.testing.assert_allclose(out, [[0.25, 0.75], [0.5, 0.5]])


# -- training ------------------------------------------------------------------


def _synthetic(n_sentences=100, random_state=0):
    return make_gaussian_hmm_corpus(n_sentences=n_sentences, random_state=random_state)


def test_gaussian_em_is_monotone():
    c = _synthetic()
    m = GaussianHMM(n_components=3, n_iter=30, tol=0.0, random_state=1).fit(c.vectors(), c.lengths)
    assert np.all(np.diff(m.trace_) >= -1e-8)


def test_estimated_covariance_em_is_monotone():
    c = _synthetic(random_state=3)
    m = GaussianHMM(n_components=3, covariance_mode="estimated", n_iter=30, tol=0.0,
                    random_state=2).fit(c.vectors(), c.lengths)
    assert np.all(np.diff(m.trace_) >= -1e-8)
    assert np.all(m.variances_ >= 1e-4)


def test_fixed_covariance_stays_fixed():
    c = _synthetic(20)
    m = GaussianHMM(n_components=3, n_iter=5, random_state=0).fit(c.vectors(), c.lengths)
    np.testing.assert_array_equal(m.variances_, 0.45)


def test_multinomial_em_is_monotone():
    c = _synthetic()
    vocab = {w: i for i, w in enumerate(c.table.words)}
    ids = np.array([vocab[w] for s in c.sentences for w in s])
    m = MultinomialHMM(n_components=3, n_iter=30, tol=0.0, random_state=1).fit(ids, c.lengths)
    assert np.all(np.diff(m.trace_) >= -1e-8)
    np.testing.assert_allclose(m.emissionprob_.sum(axis=1), 1.0)


def test_one_iteration_with_zero_tolerance():
    c = _synthetic(10)
    m = GaussianHMM(n_components=3, n_iter=1, tol=0.0, random_state=0).fit(c.vectors(), c.lengths)
    assert m.n_iter_ == 1 and len(m.trace_) == 1


def test_same_seed_same_trace():
    c = _synthetic(30)
    a = GaussianHMM(n_components=3, n_iter=10, n_init=2, random_state=7).fit(c.vectors(), c.lengths)
    b = clone(a).fit(c.vectors(), c.lengths)
    assert a.trace_ == b.trace_
    np.testing.assert_array_equal(a.means_, b.means_)


def test_recovery_on_small_problem():
    c = make_gaussian_hmm_corpus(n_tokens=800, random_state=4)
    m = GaussianHMM(n_components=3, n_init=3, random_state=0).fit(c.vectors(), c.lengths)
    gold = [np.asarray(t) for t in c.tags]
    pred = decode(m, c.vectors(), c.lengths)
    assert evaluate(gold, pred)["v_measure"] >= 0.95


def test_nan_in_likelihood_aborts_with_iteration():
    m = GaussianHMM(n_components=2, n_iter=3, means_init=np.array([[np.nan], [0.0]]),
                    random_state=0)
    with pytest.raises(NumericalError, match="iteration 1"):
        m.fit(np.zeros((4, 1)), [4])


def test_parameter_validation():
    X = np.zeros((3, 1))
    for bad in (dict(n_components=1), dict(decode_mode="greedy"),
                dict(covariance_mode="full"), dict(n_init=0)):
        with pytest.raises(ValueError):
            GaussianHMM(**bad).fit(X)


def test_dimension_mismatch_after_fit():
    c = _synthetic(10)
    m = GaussianHMM(n_components=3, n_iter=2, random_state=0).fit(c.vectors(), c.lengths)
    with pytest.raises(DataError):
        m.predict(np.zeros((3, 2)))


def test_multinomial_unknown_words_are_neutral():
    m = MultinomialHMM(n_components=2, n_iter=5, random_state=0).fit([0, 1, 2, 1], [4])
    em = m._emission_logprob(np.array([-1, 0]))
    np.testing.assert_array_equal(em[0], [0.0, 0.0])
    with pytest.raises(DataError):
        m.predict([5])


def test_sklearn_params_round_trip():
    m = GaussianHMM(n_components=4, fixed_variance=0.3)
    assert clone(m).get_params() == m.get_params()


# -- decoding ------------------------------------------------------------------


def test_decode_modes_match_lattice_routines(rng):
    m = _fitted_gaussian(rng, 3, 2)
    X = rng.normal(size=(7, 2))
    lengths = [3, 4]
    vit = decode(m, X, lengths, "viterbi")
    post = decode(m, X, lengths, "posterior")
    for k, (a, b) in enumerate([(0, 3), (3, 7)]):
        p = m.chain_potentials(X[a:b])
        np.testing.assert_array_equal(vit[k], viterbi(p)[0])
        np.testing.assert_array_equal(post[k], posterior_decode(p))
    with pytest.raises(ValueError):
        decode(m, X, lengths, "beam")


def test_decode_single_position_modes_agree(rng):
    m = _fitted_gaussian(rng, 3, 2)
    X = rng.normal(size=(1, 2))
    assert list(decode(m, X, [1], "viterbi")[0]) == list(decode(m, X, [1], "posterior")[0])


# -- seeding and inspection ----------------------------------------------------


def _table():
    return EmbeddingTable(["a", "b", "c", "d"], [[0.0, 0.0], [2.0, 2.0], [5.0, 5.0], [9.0, 1.0]])


def _model(T=2):
    m = GaussianHMM(n_components=T)
    m.means_ = np.zeros((T, 2))
    m.variances_ = np.full((T, 2), 0.45)
    return m


def test_seed_means_k1():
    seeded = seed_means(_model(), {0: ["c"], 1: ["d"]}, _table(), k=1)
    np.testing.assert_array_equal(seeded.means_, [[5, 5], [9, 1]])


def test_seed_means_k2_averages_and_leaves_original_untouched():
    m = _model()
    seeded = seed_means(m, {0: ["a", "b"]}, _table(), k=2)
    np.testing.assert_array_equal(seeded.means_[0], [1.0, 1.0])
    np.testing.assert_array_equal(m.means_, 0.0)


def test_seed_means_insufficient_words_names_tag():
    with pytest.raises(DataError, match="tag 1"):
        seed_means(_model(), {0: ["a"], 1: ["zz"]}, _table(), k=1)


def test_nearest_words():
    table = EmbeddingTable(["a", "b"], [[0.0, 0.0], [3.0, 3.0]])
    m = _model(1)
    m.means_ = np.array([[0.1, 0.0]])
    assert nearest_words(m, table, 0, 1) == ["a"]
    assert nearest_words(m, table, 0, 2) == ["a", "b"]
    assert nearest_words(m, table, 0, 10) == ["a", "b"]


def test_nearest_words_tie_is_lexicographic():
    table = EmbeddingTable(["zeta", "alpha", "mid"], [[1.0, 0.0], [-1.0, 0.0], [0.0, 0.5]])
    m = _model(1)
    assert nearest_words(m, table, 0, 3) == ["mid", "alpha", "zeta"]


def test_fit_emits_no_warnings_on_clean_data():
    c = _synthetic(40)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        GaussianHMM(n_components=3, n_iter=5, random_state=0).fit(c.vectors(), c.lengths)
