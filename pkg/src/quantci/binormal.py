"""The double-binormal population: sampling, exact posterior, density ratio, ROC."""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .numerics import normal_cdf, normal_pdf

__all__ = [
    "BinormalParams",
    "LabeledSample",
    "UnlabeledSample",
    "TrainingContext",
    "sample_training",
    "sample_test",
    "exact_posterior",
    "density_ratio",
    "log_density_ratio",
    "auc",
    "roc_curve",
    "training_sizes",
]


@dataclass(frozen=True)
class BinormalParams:
    """Equal-variance normal class conditionals N(mu, sigma^2) and N(nu, sigma^2)."""

    mu: float = 0.0
    nu: float = 2.5
    sigma: float = 1.0

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.mu > self.nu:
            raise ValueError(f"mu must not exceed nu, got mu={self.mu}, nu={self.nu}")

    def pdf_pos(self, x):
        return normal_pdf(x, self.nu, self.sigma)

    def pdf_neg(self, x):
        return normal_pdf(x, self.mu, self.sigma)

    def mixture_pdf(self, x, q):
        return q * self.pdf_pos(x) + (1.0 - q) * self.pdf_neg(x)


@dataclass(frozen=True)
class LabeledSample:
    positives: np.ndarray
    negatives: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "positives", np.asarray(self.positives, dtype=float).ravel())
        object.__setattr__(self, "negatives", np.asarray(self.negatives, dtype=float).ravel())

    @property
    def m_plus(self):
        return self.positives.size

    @property
    def m_minus(self):
        return self.negatives.size

    @property
    def prevalence(self):
        """Designed training prevalence m+/m."""
        return self.m_plus / (self.m_plus + self.m_minus)

    def to_xy(self):
        x = np.concatenate([self.positives, self.negatives])
        y = np.concatenate([np.ones(self.m_plus, dtype=int), np.zeros(self.m_minus, dtype=int)])
        return x, y


@dataclass(frozen=True)
class UnlabeledSample:
    """Test features; the true positive count is kept out of the estimators' way.

    ``latent_positive_count`` exists only for coverage evaluation.
    """

    features: np.ndarray
    _latent_positive_count: Optional[int] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=float).ravel())
        k = self._latent_positive_count
        if k is not None and not 0 <= k <= self.features.size:
            raise ValueError(f"latent positive count {k} outside [0, {self.features.size}]")

    @property
    def n(self):
        return self.features.size

    def realised_frequency(self):
        """Relative frequency of positive labels; for coverage checks only."""
        if self._latent_positive_count is None:
            raise ValueError("sample carries no latent label information")
        return self._latent_positive_count / self.n

    @property
    def latent_positive_count(self):
        return self._latent_positive_count


@dataclass(frozen=True)
class TrainingContext:
    """Either a finite labeled sample or the training population itself."""

    sample: Optional[LabeledSample] = None
    params: Optional[BinormalParams] = None
    p: Optional[float] = None

    def __post_init__(self):
        finite = self.sample is not None
        infinite = self.params is not None or self.p is not None
        if finite == infinite:
            raise ValueError("TrainingContext needs exactly one of `sample` or (`params`, `p`)")
        if infinite:
            if self.params is None or self.p is None:
                raise ValueError("infinite mode needs both params and p")
            if not 0 < self.p < 1:
                raise ValueError(f"training prevalence must be in (0, 1), got {self.p}")

    @classmethod
    def finite(cls, sample):
        return cls(sample=sample)

    @classmethod
    def infinite(cls, params, p):
        return cls(params=params, p=p)

    @property
    def mode(self):
        return "finite" if self.sample is not None else "infinite"

    @property
    def is_infinite(self):
        return self.sample is None

    @property
    def prevalence(self):
        return self.p if self.is_infinite else self.sample.prevalence


def training_sizes(p, m):
    """Split a training size ``m`` into (m_plus, m_minus) with m_plus = round(p*m)."""
    m_plus = int(round(p * m))
    return m_plus, int(m) - m_plus


def sample_training(params, m_plus, m_minus, rng):
    if m_plus < 1 or m_minus < 1:
        raise ValueError("both training subsamples need at least one instance")
    positives = rng.normal(params.nu, params.sigma, size=m_plus)
    negatives = rng.normal(params.mu, params.sigma, size=m_minus)
    return LabeledSample(positives, negatives)


def sample_test(params, q, n, rng):
    """Draw N+ ~ Binomial(n, q), then features from both classes, shuffled."""
    if not 0 <= q <= 1:
        raise ValueError(f"q must be in [0, 1], got {q}")
    if n < 1:
        raise ValueError("n must be >= 1")
    n_pos = int(rng.binomial(n, q))
    x = np.concatenate([
        rng.normal(params.nu, params.sigma, size=n_pos),
        rng.normal(params.mu, params.sigma, size=n - n_pos),
    ])
    rng.shuffle(x)
    return UnlabeledSample(x, n_pos)


def exact_posterior(params, p):
    """Coefficients (a, b) of P[Y=1|x] = 1/(1 + exp(a x + b)) for the population."""
    from .classifiers import PosteriorModel

    if not 0 < p < 1:
        raise ValueError(f"training prevalence must be in (0, 1), got {p}")
    s2 = params.sigma ** 2
    a = (params.mu - params.nu) / s2
    b = (params.nu ** 2 - params.mu ** 2) / (2.0 * s2) + np.log((1.0 - p) / p)
    return PosteriorModel(a=float(a), b=float(b), source="exact", prevalence=p)


def log_density_ratio(params, x):
    s2 = params.sigma ** 2
    x = np.asarray(x, dtype=float)
    return x * (params.nu - params.mu) / s2 + (params.mu ** 2 - params.nu ** 2) / (2.0 * s2)


def density_ratio(params, x):
    """f+(x)/f-(x)."""
    return np.exp(log_density_ratio(params, x))


def auc(params):
    return float(normal_cdf((params.nu - params.mu) / (params.sigma * np.sqrt(2.0))))


def roc_curve(params, grid_size=1000):
    """(FPR, TPR) pairs for thresholds running from -inf to +inf.

    The first row is (1, 1) and the last (0, 0); interior thresholds are
    equispaced over the population window.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    lo = min(params.mu, params.nu) - 8 * params.sigma
    hi = max(params.mu, params.nu) + 8 * params.sigma
    u = np.concatenate([[-np.inf], np.linspace(lo, hi, grid_size - 2), [np.inf]]) if grid_size > 2 \
        else np.array([-np.inf, np.inf])
    fpr = 1.0 - normal_cdf(u, params.mu, params.sigma)
    tpr = 1.0 - normal_cdf(u, params.nu, params.sigma)
    return np.column_stack([fpr, tpr])
