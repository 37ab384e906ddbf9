"""scikit-learn style wrappers: ``fit(X, y)`` on labelled training data,
``predict(X)`` returns the estimated positive-class prevalence of ``X``.

Every quantifier can alternatively be calibrated on the binormal population
itself with :meth:`BaseQuantifier.fit_population`.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted, check_random_state, check_X_y

from .binormal import LabeledSample, TrainingContext
from .classifiers import fit_logistic, population_model
from .estimators import PrevalenceEstimate, calibrate, estimate_acc, evaluate
from .intervals import bootstrap_battery, percentile_interval

__all__ = [
    "BaseQuantifier",
    "ACC",
    "ACCv",
    "MedianSweep",
    "APCC",
    "APCCv",
    "Hellinger",
    "Energy",
    "MaximumLikelihood",
]


def _as_feature(X, name="X"):
    X = check_array(X, ensure_2d=False, dtype=np.float64, input_name=name)
    if X.ndim == 2:
        if X.shape[1] != 1:
            raise ValueError(f"{name} must hold a single feature, got {X.shape[1]} columns")
        X = X[:, 0]
    return X


class BaseQuantifier(BaseEstimator):
    """Shared fit/predict plumbing; subclasses set ``_method_tag``.

    Parameters
    ----------
    pos_label : int or str, default=1
        Label of the positive class in ``y``.
    """

    _method_tag = None

    def __init__(self, pos_label=1):
        self.pos_label = pos_label

    def _tag(self):
        return self._method_tag

    def fit(self, X, y):
        """Fit the posterior model and the training-side functionals.

        Parameters
        ----------
        X : array-like of shape (n_samples,) or (n_samples, 1)
        y : array-like of shape (n_samples,)
        """
        X, y = check_X_y(X, y, ensure_2d=False, dtype=np.float64)
        x = _as_feature(X)
        pos = np.asarray(y) == self.pos_label
        if pos.all() or not pos.any():
            raise ValueError("training data must contain both classes")
        sample = LabeledSample(x[pos], x[~pos])
        self.context_ = TrainingContext.finite(sample)
        self.model_ = fit_logistic(sample)
        self.calibration_ = calibrate(self.context_, self.model_)
        self.n_features_in_ = 1
        return self

    def fit_population(self, params, p):
        """Calibrate on the binormal population with training prevalence ``p``."""
        self.context_ = TrainingContext.infinite(params, p)
        self.model_ = population_model(self.context_)
        self.calibration_ = calibrate(self.context_, self.model_)
        self.n_features_in_ = 1
        return self

    def estimate(self, X) -> PrevalenceEstimate:
        """Full estimate record (raw value, clipping and failure flags)."""
        check_is_fitted(self, "calibration_")
        x = _as_feature(X)
        tag = self._tag()
        return evaluate(self.calibration_, x, methods=(tag,))[tag].item(tag)

    def predict(self, X):
        """Estimated positive-class prevalence of the sample ``X`` (nan if the method fails)."""
        return self.estimate(X).value

    def confidence_interval(self, X, alpha=0.9, n_bootstrap=999, random_state=None):
        """Percentile bootstrap interval for the prevalence of ``X``'s population."""
        check_is_fitted(self, "calibration_")
        x = _as_feature(X)
        rng = np.random.default_rng(check_random_state(random_state).randint(0, 2 ** 31 - 1))
        tag = self._tag()
        cal = self.calibration_ if self.context_.is_infinite else None
        battery = bootstrap_battery(self.context_, x, (tag,), rng, n_bootstrap, model=self.model_, cal=cal)
        return percentile_interval(battery.replicates[tag], alpha)


class ACC(BaseQuantifier):
    """Adjusted classify & count with the classifier 'posterior >= threshold'.

    Parameters
    ----------
    threshold : float or "p", default=0.5
        Posterior threshold; ``"p"`` uses the training prevalence.
    """

    def __init__(self, threshold=0.5, pos_label=1):
        super().__init__(pos_label)
        self.threshold = threshold

    def _tag(self):
        if self.threshold == "p":
            return "ACCp"
        if self.threshold == 0.5:
            return "ACC50"
        raise ValueError("bootstrap intervals support threshold 0.5 or 'p' only")

    def estimate(self, X):
        if self.threshold in ("p", 0.5):
            return super().estimate(X)
        check_is_fitted(self, "calibration_")
        return estimate_acc(self.context_, self.model_, _as_feature(X), float(self.threshold))


class ACCv(BaseQuantifier):
    """ACC with the grid threshold minimising the estimated variance."""

    _method_tag = "ACCv"


class MedianSweep(BaseQuantifier):
    """Median of ACC estimates over well-conditioned grid thresholds."""

    _method_tag = "MS"


class APCC(BaseQuantifier):
    """Adjusted probabilistic classify & count."""

    _method_tag = "APCC"


class APCCv(BaseQuantifier):
    """APCC with the prior parameter minimising the estimated variance."""

    _method_tag = "APCCv"


class Hellinger(BaseQuantifier):
    """Binned Hellinger-distance matching.

    Parameters
    ----------
    n_bins : {4, 8}, default=4
    """

    def __init__(self, n_bins=4, pos_label=1):
        super().__init__(pos_label)
        self.n_bins = n_bins

    def _tag(self):
        if self.n_bins not in (4, 8):
            raise ValueError(f"n_bins must be 4 or 8, got {self.n_bins}")
        return f"H{self.n_bins}"


class Energy(BaseQuantifier):
    """Energy-distance matching of posterior-probability distributions."""

    _method_tag = "Energy"


class MaximumLikelihood(BaseQuantifier):
    """Maximum-likelihood mixture weight given the density ratio."""

    _method_tag = "ML"
