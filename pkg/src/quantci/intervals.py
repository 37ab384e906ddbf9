"""Confidence and prediction intervals for prevalence estimates.

Bootstrap intervals use stratified resampling and the percentile method;
the closed-form alternatives are Clopper-Pearson intervals pushed through
the ratio-estimator map and the normal approximation of the ML estimator.
Error-adjusted bootstrapping (EAB) is provided for comparison.
"""

from dataclasses import dataclass
import math
from typing import Dict, Optional, Sequence

import numpy as np
from scipy.special import expit

from .binormal import TrainingContext, UnlabeledSample
from .classifiers import PosteriorModel, population_model, posterior_prob, rates_for_threshold
from .estimators import (
    GRID,
    METHODS,
    MS_MIN_DENOMINATOR,
    Calibration,
    calibrate,
    calibrate_resamples,
    evaluate,
    ml_asymptotic_variance,
)
from .numerics import beta_quantile, normal_quantile

__all__ = [
    "IntervalFailure",
    "IntervalRecord",
    "BootstrapBattery",
    "percentile_interval",
    "bootstrap_battery",
    "bootstrap_confidence",
    "prediction_overlay",
    "clopper_pearson",
    "exact_interval_ratio",
    "mlinf_interval",
    "predictive_values",
    "eab_prediction",
    "EXACT_METHODS",
    "MAX_FAILED_SHARE",
]

MAX_FAILED_SHARE = 0.5
EXACT_METHODS = ("ACC50", "ACCp", "ACCv", "MS", "APCC", "APCCv", "ML")


class IntervalFailure(ValueError):
    """An interval could not be constructed (too few replicates, zero denominator, ...)."""


@dataclass(frozen=True)
class IntervalRecord:
    lower: float
    upper: float
    kind: str = "confidence"
    level: float = 0.9
    method_tag: str = ""
    target: float = float("nan")
    failed: bool = False
    n_failed: int = 0
    estimate: float = float("nan")

    def __post_init__(self):
        if self.kind not in ("confidence", "prediction"):
            raise ValueError(f"kind must be 'confidence' or 'prediction', got {self.kind!r}")
        if not 0 < self.level < 1:
            raise ValueError(f"level must be in (0, 1), got {self.level}")
        if not self.failed and not 0.0 <= self.lower <= self.upper <= 1.0:
            raise ValueError(f"invalid interval ({self.lower}, {self.upper})")

    @classmethod
    def failure(cls, kind, level, method_tag, n_failed=0, target=float("nan")):
        return cls(float("nan"), float("nan"), kind, level, method_tag, target, True, n_failed)

    @property
    def length(self):
        return self.upper - self.lower

    def contains(self, value):
        return (not self.failed) and self.lower <= value <= self.upper

    def with_target(self, target):
        return IntervalRecord(self.lower, self.upper, self.kind, self.level, self.method_tag,
                              target, self.failed, self.n_failed, self.estimate)


@dataclass
class BootstrapBattery:
    """Replicate estimates per method, failures removed but counted."""

    replicates: Dict[str, np.ndarray]
    n_failed: Dict[str, int]
    R: int

    def interval(self, tag, alpha, kind="confidence", values=None):
        reps = self.replicates[tag] if values is None else values
        if self.n_failed[tag] > MAX_FAILED_SHARE * self.R:
            return IntervalRecord.failure(kind, alpha, tag, self.n_failed[tag])
        try:
            lo, hi = percentile_interval(reps, alpha)
        except IntervalFailure:
            return IntervalRecord.failure(kind, alpha, tag, self.n_failed[tag])
        return IntervalRecord(lo, hi, kind, alpha, tag, n_failed=self.n_failed[tag])


def _percentile_ranks(count, alpha):
    lo = math.ceil(round((count + 1) * (1.0 - alpha) / 2.0, 9))
    hi = math.floor(round((count + 1) * (1.0 + alpha) / 2.0, 9))
    return min(max(lo, 1), count), min(max(hi, 1), count)


def percentile_interval(replicates, alpha):
    """Order-statistic interval at ranks ceil((R'+1)(1-a)/2) and floor((R'+1)(1+a)/2).

    Parameters
    ----------
    replicates : array_like
        The R' successful bootstrap estimates.
    alpha : float
        Interval level in (0, 1).

    Returns
    -------
    (lower, upper) : tuple of float
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    reps = np.sort(np.asarray(replicates, dtype=float).ravel())
    if reps.size < 2:
        raise IntervalFailure(f"need at least 2 replicates, got {reps.size}")
    lo, hi = _percentile_ranks(reps.size, alpha)
    return float(reps[lo - 1]), float(reps[hi - 1])


def _features(test):
    return test.features if isinstance(test, UnlabeledSample) else np.asarray(test, dtype=float).ravel()


def bootstrap_battery(ctx: TrainingContext, test, methods: Sequence[str] = METHODS, rng=None,
                      R: int = 999, model: Optional[PosteriorModel] = None,
                      cal: Optional[Calibration] = None, chunk: int = 128) -> BootstrapBattery:
    """R stratified bootstrap replicates of every method.

    Finite mode resamples positives, negatives and the test sample and refits
    the posterior model on every replicate. Infinite mode keeps the population
    calibration fixed and resamples the test sample only. All indices come
    from ``rng`` in a fixed order, so the battery is a deterministic function
    of the generator state.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    rng = np.random.default_rng() if rng is None else rng
    x = _features(test)
    n = x.size
    methods = tuple(methods)
    chunks: Dict[str, list] = {m: [] for m in methods}

    if ctx.is_infinite:
        if cal is None:
            cal = calibrate(ctx, model or population_model(ctx))
        energy_terms = cal.energy_point_terms(x) if "Energy" in methods else None
    else:
        pos, neg = ctx.sample.positives, ctx.sample.negatives
        if pos.size == 0 or neg.size == 0:
            raise ValueError("both training subsamples must be non-empty")

    done = 0
    while done < R:
        size = min(chunk, R - done)
        if ctx.is_infinite:
            idx = rng.integers(0, n, size=(size, n))
            res = evaluate(cal, x, idx, methods, energy_terms=energy_terms)
        else:
            pi = rng.integers(0, pos.size, size=(size, pos.size))
            ni = rng.integers(0, neg.size, size=(size, neg.size))
            idx = rng.integers(0, n, size=(size, n))
            rcal = calibrate_resamples(pos[pi], neg[ni])
            res = evaluate(rcal, x, idx, methods)
        for m in methods:
            chunks[m].append(np.where(res[m].failed, np.nan, res[m].value))
        done += size

    reps, failed = {}, {}
    for m in methods:
        allv = np.concatenate(chunks[m])
        ok = np.isfinite(allv)
        reps[m] = allv[ok]
        failed[m] = int((~ok).sum())
    return BootstrapBattery(reps, failed, R)


def bootstrap_confidence(ctx, test, methods=METHODS, rng=None, R=999, alpha=0.9, **kwargs):
    """Percentile bootstrap confidence intervals, one IntervalRecord per method."""
    battery = bootstrap_battery(ctx, test, methods, rng, R, **kwargs)
    return {m: battery.interval(m, alpha) for m in methods}


def prediction_overlay(replicates, n, rng):
    """Binomial(n, e)/n for every replicate estimate e."""
    reps = np.clip(np.asarray(replicates, dtype=float), 0.0, 1.0)
    return rng.binomial(n, reps) / n


def clopper_pearson(successes, n, alpha):
    """Conservative ("exact") binomial interval for a success probability."""
    k = int(successes)
    if n < 1 or not 0 <= k <= n:
        raise ValueError(f"need 0 <= successes <= n with n >= 1, got k={successes}, n={n}")
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    lower = 0.0 if k == 0 else beta_quantile((1.0 - alpha) / 2.0, k, n - k + 1)
    upper = 1.0 if k == n else beta_quantile((1.0 + alpha) / 2.0, k + 1, n - k)
    return lower, upper


def _map_ratio(lo, hi, neg, pos):
    den = pos - neg
    if not np.isfinite(den) or abs(den) < 1e-12:
        raise IntervalFailure("zero denominator in the ratio map")
    ends = np.clip([(lo - neg) / den, (hi - neg) / den], 0.0, 1.0)
    return float(ends.min()), float(ends.max())


def exact_interval_ratio(ctx, model, test, method_tag, alpha=0.9, cal=None):
    """Clopper-Pearson interval mapped through the ratio estimator.

    Threshold methods use the test exceedance count; APCC-type methods use
    the pseudo-count round(n * mean h). MS takes the medians of the mapped
    lower and upper ends over its qualifying thresholds.
    """
    if method_tag not in ("ACC50", "ACCp", "ACCv", "MS", "APCC", "APCCv"):
        raise ValueError(f"no exact interval for method {method_tag!r}")
    x = _features(test)
    n = x.size
    cal = calibrate(ctx, model) if cal is None else cal
    res = evaluate(cal, x, methods=(method_tag,))[method_tag]
    est = float(res.value[0])
    try:
        if res.failed[0]:
            raise IntervalFailure("point estimate failed")
        if method_tag in ("ACC50", "ACCp", "ACCv"):
            e = res.extra
            k = int(round(float(e["rate"][0]) * n))
            lo, hi = clopper_pearson(k, n, alpha)
            lower, upper = _map_ratio(lo, hi, float(e["fpr"][0]), float(e["tpr"][0]))
        elif method_tag == "MS":
            h = expit(-(cal.a[0] * x + cal.b[0]))
            lows, highs = [], []
            for j, t in enumerate(GRID):
                tpr, fpr = cal.tpr[0, j], cal.fpr[0, j]
                if not (np.isfinite(tpr - fpr) and tpr - fpr > MS_MIN_DENOMINATOR):
                    continue
                lo, hi = clopper_pearson(int(np.sum(h >= t)), n, alpha)
                a, b = _map_ratio(lo, hi, fpr, tpr)
                lows.append(a)
                highs.append(b)
            lower, upper = float(np.median(lows)), float(np.median(highs))
        else:
            e = res.extra
            k = int(round(float(e["test_mean"][0]) * n))
            lo, hi = clopper_pearson(k, n, alpha)
            lower, upper = _map_ratio(lo, hi, float(e["mean_neg"][0]), float(e["mean_pos"][0]))
    except IntervalFailure:
        return IntervalRecord.failure("confidence", alpha, method_tag)
    return IntervalRecord(lower, upper, "confidence", alpha, method_tag, estimate=est)


def mlinf_interval(estimate, v_n, n, alpha=0.9, method_tag="MLinf"):
    """Normal-approximation interval q +/- z * sqrt(v_n / n), clipped to [0, 1]."""
    q = float(getattr(estimate, "value", estimate))
    if getattr(estimate, "failed", False) or not np.isfinite(q) or not np.isfinite(v_n) or v_n < 0:
        return IntervalRecord.failure("confidence", alpha, method_tag)
    half = normal_quantile((1.0 + alpha) / 2.0) * math.sqrt(v_n / n)
    return IntervalRecord(max(q - half, 0.0), min(q + half, 1.0), "confidence", alpha, method_tag,
                          estimate=q)


def ml_interval(ctx, model, test, alpha=0.9, cal=None):
    """MLinf interval for one test sample, variance evaluated at the ML estimate."""
    x = _features(test)
    cal = calibrate(ctx, model) if cal is None else cal
    est = evaluate(cal, x, methods=("ML",))["ML"].item("ML")
    if est.failed:
        return IntervalRecord.failure("confidence", alpha, "MLinf")
    lr = np.clip(cal.log_ratio(x[None, :])[0], -700.0, 700.0)
    v_n = ml_asymptotic_variance(est, np.exp(lr))
    return mlinf_interval(est, v_n, x.size, alpha)


def predictive_values(ctx, model, t, prevalence=None):
    """P[Y=1 | g=1] and P[Y=1 | g=-1] for the classifier 'posterior >= t'.

    In finite mode they are the labelled-sample fractions; in infinite mode
    they follow from TPR, FPR and the prevalence. Passing ``prevalence``
    recomputes them under that prevalence from the training TPR and FPR.
    """
    if ctx.is_infinite or prevalence is not None:
        rates = rates_for_threshold(ctx, model, t)
        p = ctx.prevalence if prevalence is None else prevalence
        pos_rate = p * rates.tpr + (1 - p) * rates.fpr
        if pos_rate <= 0 or pos_rate >= 1:
            raise IntervalFailure("a predicted class has probability zero")
        return p * rates.tpr / pos_rate, p * (1 - rates.tpr) / (1 - pos_rate)
    s = ctx.sample
    gp = posterior_prob(model, s.positives) >= t
    gn = posterior_prob(model, s.negatives) >= t
    called_pos = gp.sum() + gn.sum()
    called_neg = s.m_plus + s.m_minus - called_pos
    if called_pos == 0 or called_neg == 0:
        raise IntervalFailure("a predicted class is empty in the training sample")
    return float(gp.sum() / called_pos), float((~gp).sum() / called_neg)


def eab_prediction(ctx, model, test, t, alpha=0.9, rng=None, R=999, oracle_q=None, method_tag="DnP"):
    """Error-adjusted bootstrap prediction interval for the realised positive fraction.

    Each bootstrap resample of the test features is classified with threshold
    ``t`` and every instance is relabelled by a Bernoulli draw with the
    predictive value of its predicted class. The recorded ``estimate`` is one
    relabelling of the original test sample. With ``oracle_q`` the predictive
    values are recomputed under that prevalence.
    """
    rng = np.random.default_rng() if rng is None else rng
    x = _features(test)
    n = x.size
    try:
        ppv, fomr = predictive_values(ctx, model, t, oracle_q)
    except IntervalFailure:
        return IntervalRecord.failure("prediction", alpha, method_tag)
    g = posterior_prob(model, x) >= t
    prob = np.where(g, ppv, fomr)
    estimate = float((rng.random(n) < prob).mean())
    idx = rng.integers(0, n, size=(R, n))
    fractions = (rng.random((R, n)) < prob[idx]).mean(axis=1)
    lo, hi = percentile_interval(fractions, alpha)
    return IntervalRecord(lo, hi, "prediction", alpha, method_tag, estimate=estimate)
