import numpy as np
import pytest

from quantci.binormal import BinormalParams, LabeledSample, TrainingContext, exact_posterior, sample_training
from quantci.classifiers import (
    COEFFICIENT_CAP,
    DegenerateClassifierError,
    PosteriorModel,
    cut_point,
    fit_logistic,
    fit_logistic_batch,
    h_pi,
    means_for_h,
    population_model,
    posterior_prob,
    rates_for_threshold,
)
from quantci.estimators import GRID

import oracles

PARAMS = BinormalParams(0.0, 2.5, 1.0)
INF = TrainingContext.infinite(PARAMS, 0.5)
EXACT = exact_posterior(PARAMS, 0.5)
# frozen from oracles.logistic_mle on the seed-3 sample built below
LOGIT_SEED3 = (-2.491562611798307, 3.3609775590606663)
# frozen from oracles.binormal_rates / oracles.trapezoid
RATES_T50 = (0.8943502263331446, 0.10564977366685535)
MEANS_EXACT = (0.8466375592625539, 0.1533624407374455)


def test_fit_symmetric_sample_is_flat():
    m = fit_logistic(LabeledSample([0.0, 1.0], [0.0, 1.0]))
    assert m.a == pytest.approx(0.0, abs=1e-12)
    assert m.b == pytest.approx(0.0, abs=1e-12)
    assert not m.separated


def test_fit_separable_pair_is_capped():
    m = fit_logistic(LabeledSample([1.0], [-1.0]))
    assert m.separated
    assert abs(m.a) == COEFFICIENT_CAP
    assert posterior_prob(m, 1.0) > 0.99 and posterior_prob(m, -1.0) < 0.01


def test_fit_matches_likelihood_oracle():
    rng = np.random.default_rng(3)
    x = np.r_[rng.normal(2.5, 1, 40), rng.normal(0, 1, 60)]
    m = fit_logistic(LabeledSample(x[:40], x[40:]))
    assert m.a == pytest.approx(LOGIT_SEED3[0], abs=1e-6)
    assert m.b == pytest.approx(LOGIT_SEED3[1], abs=1e-6)
    assert m.prevalence == 0.4


def test_fit_consistency_large_sample():
    s = sample_training(PARAMS, 50_000, 50_000, np.random.default_rng(8))
    m = fit_logistic(s)
    assert m.a == pytest.approx(-2.5, abs=0.1)
    assert m.b == pytest.approx(3.125, abs=0.15)


def test_fit_batch_rows_independent():
    rng = np.random.default_rng(9)
    x = np.r_[rng.normal(2.5, 1, (3, 20)).T, rng.normal(0, 1, (3, 30)).T].T
    y = np.r_[np.ones((20, 3)), np.zeros((30, 3))].T
    a, b, sep = fit_logistic_batch(x, y)
    for i in range(3):
        ref = fit_logistic(LabeledSample(x[i, :20], x[i, 20:]))
        assert (a[i], b[i]) == pytest.approx((ref.a, ref.b), abs=1e-12)


def test_fit_requires_both_classes():
    with pytest.raises(ValueError):
        fit_logistic(LabeledSample([], [0.0]))


def test_posterior_model_validation():
    with pytest.raises(ValueError):
        PosteriorModel(np.inf, 0.0)
    with pytest.raises(ValueError):
        PosteriorModel(0.0, 0.0, prevalence=1.0)


def test_posterior_prob_examples():
    assert posterior_prob(EXACT, 1.25) == 0.5
    assert posterior_prob(PosteriorModel(0.0, 0.0), 17.0) == 0.5
    x = np.linspace(-5, 5, 101)
    assert np.all(np.diff(posterior_prob(EXACT, x)) > 0)


def test_h_pi_examples():
    x = np.linspace(-4, 6, 51)
    np.testing.assert_allclose(h_pi(EXACT, 0.5, x), posterior_prob(EXACT, x), atol=1e-12)
    assert h_pi(EXACT, 0.2, 1.25) == pytest.approx(0.2, abs=1e-15)
    assert np.all(h_pi(EXACT, 0.7, x) >= h_pi(EXACT, 0.3, x))
    with pytest.raises(ValueError):
        h_pi(EXACT, 0.0, 1.0)


def test_h_pi_fitted_mode_uses_design_prevalence():
    m = PosteriorModel(-1.3, 0.4, prevalence=0.33)
    x = np.linspace(-2, 3, 11)
    np.testing.assert_allclose(h_pi(m, 0.33, x), posterior_prob(m, x), atol=1e-12)


def test_rates_infinite_mode():
    r = rates_for_threshold(INF, EXACT, 0.5)
    assert cut_point(EXACT, 0.5) == 1.25
    assert (r.tpr, r.fpr) == pytest.approx(RATES_T50, abs=1e-12)
    for t in (0.1, 0.33, 0.9):
        got = rates_for_threshold(INF, EXACT, t)
        assert (got.tpr, got.fpr) == pytest.approx(oracles.binormal_rates(0, 2.5, 1, -2.5, 3.125, t), abs=1e-12)
    lo = rates_for_threshold(INF, EXACT, 1e-9)
    assert lo.tpr > 0.999 and lo.fpr > 0.999


def test_rates_every_grid_threshold_orders_classes():
    for t in GRID:
        r = rates_for_threshold(INF, EXACT, t)
        assert r.tpr >= r.fpr


def test_rates_finite_mode_empty_exceedance():
    ctx = TrainingContext.finite(LabeledSample([0.1, 0.2], [0.0, -1.0]))
    r = rates_for_threshold(ctx, EXACT, 0.5)
    assert (r.tpr, r.fpr) == (0.0, 0.0)


def test_rates_finite_converge_to_population():
    s = sample_training(PARAMS, 100_000, 100_000, np.random.default_rng(10))
    ctx = TrainingContext.finite(s)
    for t in (0.2, 0.5, 0.8):
        a = rates_for_threshold(ctx, EXACT, t)
        b = rates_for_threshold(INF, EXACT, t)
        assert abs(a.tpr - b.tpr) < 0.01 and abs(a.fpr - b.fpr) < 0.01


def test_rates_degenerate_model():
    with pytest.raises(DegenerateClassifierError):
        rates_for_threshold(INF, PosteriorModel(0.0, 0.0), 0.5)


def test_means_exact_mode():
    m = means_for_h(INF, EXACT)
    assert (m.mean_pos, m.mean_neg) == pytest.approx(MEANS_EXACT, abs=1e-9)
    # mirror symmetry of the p = 0.5 model
    assert m.mean_pos == pytest.approx(1 - m.mean_neg, abs=1e-12)


def test_means_constant_model():
    m = means_for_h(INF, PosteriorModel(0.0, 0.0))
    assert (m.mean_pos, m.mean_neg) == pytest.approx((0.5, 0.5), abs=1e-12)


def test_means_against_monte_carlo():
    rng = np.random.default_rng(11)
    m = means_for_h(INF, EXACT, pi=0.3)
    xs = rng.normal(2.5, 1, 10 ** 6)
    h = h_pi(EXACT, 0.3, xs)
    assert abs(m.mean_pos - h.mean()) < 3 * h.std() / 1e3


def test_means_finite_mode():
    ctx = TrainingContext.finite(LabeledSample([2.0, 3.0], [0.0]))
    m = means_for_h(ctx, EXACT)
    assert m.mean_pos == pytest.approx(posterior_prob(EXACT, np.array([2.0, 3.0])).mean())
    assert m.mean_neg == pytest.approx(posterior_prob(EXACT, 0.0))


def test_population_model_dispatch():
    assert population_model(INF).source == "exact"
    s = sample_training(PARAMS, 20, 20, np.random.default_rng(1))
    assert population_model(TrainingContext.finite(s)).source == "fitted"
