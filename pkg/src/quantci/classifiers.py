"""Posterior-probability models, threshold classifiers and their training-side rates.

The posterior is parametrised as P[Y=1|x] = 1/(1 + exp(a*x + b)), so a model
that ranks positives above negatives has a < 0.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import expit

from .binormal import LabeledSample, TrainingContext, exact_posterior
from .numerics import QuadratureSpec, integrate, normal_cdf, population_window

__all__ = [
    "COEFFICIENT_CAP",
    "DegenerateClassifierError",
    "PosteriorModel",
    "RatesAndMeans",
    "fit_logistic",
    "fit_logistic_batch",
    "posterior_prob",
    "h_pi",
    "shifted_intercept",
    "cut_point",
    "rates_for_threshold",
    "means_for_h",
    "population_model",
]

COEFFICIENT_CAP = 50.0


class DegenerateClassifierError(ValueError):
    """The posterior model has zero slope, so thresholds do not separate anything."""


@dataclass(frozen=True)
class PosteriorModel:
    a: float
    b: float
    source: str = "fitted"
    prevalence: float = 0.5
    separated: bool = False

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)):
            raise ValueError(f"non-finite coefficients ({self.a}, {self.b})")
        if not 0 < self.prevalence < 1:
            raise ValueError(f"model prevalence must be in (0, 1), got {self.prevalence}")


@dataclass(frozen=True)
class RatesAndMeans:
    """Class-conditional functionals of a (crisp or soft) classifier."""

    pos: float
    neg: float
    kind: str = "threshold"

    @property
    def tpr(self):
        return self.pos

    @property
    def fpr(self):
        return self.neg

    @property
    def mean_pos(self):
        return self.pos

    @property
    def mean_neg(self):
        return self.neg

    @property
    def denominator(self):
        return self.pos - self.neg


def fit_logistic_batch(x, y, max_iter=25, tol=1e-8):
    """Maximum-likelihood logistic fits for a stack of samples.

    Parameters
    ----------
    x, y : ndarray, shape (B, m)
        Features and 0/1 labels, one sample per row.

    Returns
    -------
    a, b : ndarray, shape (B,)
    separated : ndarray of bool, shape (B,)
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n_batch = x.shape[0]
    p_hat = y.mean(axis=1)
    if np.any((p_hat <= 0) | (p_hat >= 1)):
        raise ValueError("both classes must be present in every sample")

    # standard parametrisation eta = beta0 + beta1 * x, with a = -beta1, b = -beta0
    beta0 = np.log(p_hat / (1.0 - p_hat))
    beta1 = np.zeros(n_batch)

    pos_min = np.where(y == 1, x, np.inf).min(axis=1)
    pos_max = np.where(y == 1, x, -np.inf).max(axis=1)
    neg_min = np.where(y == 0, x, np.inf).min(axis=1)
    neg_max = np.where(y == 0, x, -np.inf).max(axis=1)
    above = pos_min > neg_max
    below = pos_max < neg_min
    separated = above | below

    def loglik(b0, b1):
        eta = b0[:, None] + b1[:, None] * x
        return (y * eta - np.logaddexp(0.0, eta)).sum(axis=1)

    active = ~separated
    ll = loglik(beta0, beta1)
    for _ in range(max_iter):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        xa, ya = x[idx], y[idx]
        eta = beta0[idx, None] + beta1[idx, None] * xa
        prob = expit(eta)
        w = prob * (1.0 - prob)
        resid = ya - prob
        g0, g1 = resid.sum(axis=1), (resid * xa).sum(axis=1)
        h00, h01, h11 = w.sum(axis=1), (w * xa).sum(axis=1), (w * xa * xa).sum(axis=1)
        det = h00 * h11 - h01 * h01
        ok = det > 1e-300
        det = np.where(ok, det, 1.0)
        step0 = np.where(ok, (h11 * g0 - h01 * g1) / det, 0.0)
        step1 = np.where(ok, (h00 * g1 - h01 * g0) / det, 0.0)

        scale = np.ones(idx.size)
        new0, new1 = beta0[idx] + step0, beta1[idx] + step1
        eta_new = new0[:, None] + new1[:, None] * xa
        new_ll = (ya * eta_new - np.logaddexp(0.0, eta_new)).sum(axis=1)
        # step halving keeps the likelihood monotone
        for _ in range(30):
            worse = new_ll < ll[idx] - 1e-12
            if not worse.any():
                break
            scale = np.where(worse, 0.5 * scale, scale)
            new0 = beta0[idx] + scale * step0
            new1 = beta1[idx] + scale * step1
            eta_new = new0[:, None] + new1[:, None] * xa
            new_ll = (ya * eta_new - np.logaddexp(0.0, eta_new)).sum(axis=1)
        improvement = new_ll - ll[idx]
        beta0[idx], beta1[idx], ll[idx] = new0, new1, new_ll
        active[idx[(improvement < tol) | ~ok]] = False

    a = -beta1
    b = -beta0
    # perfectly separable samples get a crisp boundary at the gap midpoint
    mid = np.where(above, 0.5 * (pos_min + neg_max), 0.5 * (pos_max + neg_min))
    a = np.where(above, -COEFFICIENT_CAP, np.where(below, COEFFICIENT_CAP, a))
    b = np.where(separated, -a * mid, b)
    big = np.abs(a) > COEFFICIENT_CAP
    if big.any():
        shrink = COEFFICIENT_CAP / np.abs(a[big])
        a[big] *= shrink
        b[big] *= shrink
        separated = separated | big
    return a, b, separated


def fit_logistic(sample: LabeledSample) -> PosteriorModel:
    """Logistic regression of the label on the feature by IRLS."""
    if sample.m_plus == 0 or sample.m_minus == 0:
        raise ValueError("both classes must be non-empty")
    x, y = sample.to_xy()
    a, b, separated = fit_logistic_batch(x[None, :], y[None, :])
    return PosteriorModel(a=float(a[0]), b=float(b[0]), source="fitted",
                          prevalence=sample.prevalence, separated=bool(separated[0]))


def population_model(ctx: TrainingContext) -> PosteriorModel:
    """Exact model in infinite mode, logistic fit in finite mode."""
    if ctx.is_infinite:
        return exact_posterior(ctx.params, ctx.p)
    return fit_logistic(ctx.sample)


def posterior_prob(model, x):
    return expit(-(model.a * np.asarray(x, dtype=float) + model.b))


def shifted_intercept(b, model_prevalence, pi):
    """Intercept of the posterior after replacing the prior odds by those of ``pi``."""
    return b + np.log((1.0 - pi) / pi) - np.log((1.0 - model_prevalence) / model_prevalence)


def h_pi(model, pi, x):
    """Posterior positive-class probability under prior ``pi`` instead of the training prior."""
    if not 0 < pi < 1:
        raise ValueError(f"pi must be in (0, 1), got {pi}")
    b_pi = shifted_intercept(model.b, model.prevalence, pi)
    return expit(-(model.a * np.asarray(x, dtype=float) + b_pi))


def cut_point(model, t):
    """Feature value where the posterior equals ``t``."""
    if model.a == 0:
        raise DegenerateClassifierError("slope a = 0: the posterior does not depend on x")
    return (np.log(1.0 / t - 1.0) - model.b) / model.a


def rates_for_threshold(ctx: TrainingContext, model: PosteriorModel, t: float) -> RatesAndMeans:
    """TPR and FPR of the classifier 'posterior >= t'."""
    if not 0 < t < 1:
        raise ValueError(f"threshold must be in (0, 1), got {t}")
    c = cut_point(model, t)
    if ctx.is_infinite:
        params = ctx.params
        if model.a < 0:
            tpr = 1.0 - normal_cdf(c, params.nu, params.sigma)
            fpr = 1.0 - normal_cdf(c, params.mu, params.sigma)
        else:
            tpr = normal_cdf(c, params.nu, params.sigma)
            fpr = normal_cdf(c, params.mu, params.sigma)
    else:
        pos, neg = ctx.sample.positives, ctx.sample.negatives
        if model.a < 0:
            tpr, fpr = np.mean(pos >= c), np.mean(neg >= c)
        else:
            tpr, fpr = np.mean(pos <= c), np.mean(neg <= c)
    return RatesAndMeans(float(tpr), float(fpr), kind="threshold")


def population_mean(params, a, b, positive, tol=1e-10):
    """E[1/(1 + exp(a X + b))] for X from one class-conditional normal."""
    centre = params.nu if positive else params.mu
    lo, hi = population_window(params.mu, params.nu, params.sigma)

    def integrand(x):
        return np.exp(-0.5 * ((x - centre) / params.sigma) ** 2) / (params.sigma * np.sqrt(2 * np.pi)) \
            * expit(-(a * x + b))

    return integrate(integrand, QuadratureSpec(lo, hi, tol))


def means_for_h(ctx: TrainingContext, model: PosteriorModel, pi: Optional[float] = None) -> RatesAndMeans:
    """Class-conditional means of the posterior (or of h_pi when ``pi`` is given)."""
    b = model.b if pi is None else shifted_intercept(model.b, model.prevalence, pi)
    if ctx.is_infinite:
        mean_pos = population_mean(ctx.params, model.a, b, positive=True)
        mean_neg = population_mean(ctx.params, model.a, b, positive=False)
    else:
        mean_pos = float(np.mean(expit(-(model.a * ctx.sample.positives + b))))
        mean_neg = float(np.mean(expit(-(model.a * ctx.sample.negatives + b))))
    return RatesAndMeans(float(mean_pos), float(mean_neg), kind="posterior")
