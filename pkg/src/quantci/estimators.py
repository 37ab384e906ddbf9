"""Binary class-prevalence estimators.

All ten methods share one vectorised engine: a :class:`Calibration` holds the
training-side functionals of one posterior model (or a stack of refitted
models, one per bootstrap replicate) and :func:`evaluate` applies them to a
stack of test samples. The per-method functions further down wrap the engine
for a single training context and test sample.
"""

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence
import warnings

import numpy as np
from scipy.special import expit

from .binormal import BinormalParams, TrainingContext, UnlabeledSample, log_density_ratio
from .classifiers import (
    DegenerateClassifierError,
    PosteriorModel,
    fit_logistic_batch,
    h_pi,
    means_for_h,
    posterior_prob,
    rates_for_threshold,
    shifted_intercept,
)
from .numerics import (
    QuadratureSpec,
    cumulative_integrals,
    integrate,
    normal_cdf,
    normal_pdf,
    normal_quantile,
    population_window,
)

__all__ = [
    "GRID",
    "METHODS",
    "MS_MIN_DENOMINATOR",
    "PrevalenceEstimate",
    "MethodBatch",
    "Calibration",
    "evaluate",
    "calibrate",
    "calibrate_resamples",
    "estimate",
    "estimate_acc",
    "select_threshold_accv",
    "estimate_ms",
    "estimate_apcc",
    "select_pi_apccv",
    "estimate_hellinger",
    "estimate_energy",
    "estimate_ml",
    "ml_ratios",
    "ml_asymptotic_variance",
    "hellinger_boundaries",
    "minimise_hellinger",
    "energy_quotient",
    "solve_ml",
]

GRID = np.round(np.arange(1, 20) * 0.05, 2)
METHODS = ("ACC50", "ACCp", "ACCv", "MS", "APCC", "APCCv", "H4", "H8", "Energy", "ML")
MS_MIN_DENOMINATOR = 0.25
HELLINGER_BINS = {"H4": 4, "H8": 8}

_I50 = int(np.flatnonzero(GRID == 0.5)[0])
_IP = GRID.size  # column of the training-prevalence threshold
_EPS = 1e-12
_LOG_RATIO_CAP = 700.0


@dataclass(frozen=True)
class PrevalenceEstimate:
    value: float
    raw_value: float
    clipped: bool = False
    failed: bool = False
    method_tag: str = ""
    detail: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.failed and not 0.0 <= self.value <= 1.0:
            raise ValueError(f"estimate {self.value} outside [0, 1]")


@dataclass
class MethodBatch:
    """Results of one method over a stack of B test samples."""

    value: np.ndarray
    raw: np.ndarray
    failed: np.ndarray
    clipped: np.ndarray
    extra: Dict[str, np.ndarray] = field(default_factory=dict)

    def item(self, tag, i=0):
        failed = bool(self.failed[i])
        detail = {k: v[i] for k, v in self.extra.items()}
        return PrevalenceEstimate(
            value=float("nan") if failed else float(self.value[i]),
            raw_value=float(self.raw[i]),
            clipped=bool(self.clipped[i]),
            failed=failed,
            method_tag=tag,
            detail=detail,
        )


def _ratio_batch(num, neg, pos):
    """Clipped ratio estimator (num - neg) / (pos - neg) with failure mask."""
    den = pos - neg
    failed = np.abs(den) < _EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = np.where(failed, np.nan, (num - neg) / np.where(failed, 1.0, den))
    value = np.clip(raw, 0.0, 1.0)
    clipped = ~failed & ((raw < 0) | (raw > 1))
    return MethodBatch(value, raw, failed, clipped)


def hellinger_boundaries(mu, nu, sigma, bins):
    """Interior bin edges sigma * Phi^-1(i/bins) + (mu + nu)/2 for i = 1..bins-1."""
    u = np.arange(1, bins) / bins
    z = normal_quantile(u)
    mu, nu, sigma = (np.asarray(v, dtype=float)[..., None] for v in (mu, nu, sigma))
    return sigma * z + 0.5 * (mu + nu)


def _bin_index(x, bounds):
    """Bin i collects ell_{i-1} < x <= ell_i; x (B, n), bounds (Bc, k)."""
    return (x[:, :, None] > bounds[:, None, :]).sum(axis=2)


def _bin_freqs(x, bounds, bins):
    idx = _bin_index(x, bounds)
    return np.stack([(idx == i).mean(axis=1) for i in range(bins)], axis=1)


def _mean_abs_diff(c, v):
    """mean_k |c[r, j] - v[r, k]| for every r, j without forming the B*n*m cube.

    Values are assumed to lie in [0, 1] (posterior probabilities).
    """
    c = np.atleast_2d(c)
    v = np.sort(np.atleast_2d(v), axis=1)
    rows, m = v.shape
    if c.shape[0] != rows:
        v = np.broadcast_to(v, (c.shape[0], m))
        rows = c.shape[0]
    offset = 4.0 * np.arange(rows)[:, None]
    flat = (v + offset).ravel()
    csum = np.concatenate([np.zeros((rows, 1)), np.cumsum(v, axis=1)], axis=1)
    pos = np.searchsorted(flat, (c + offset).ravel(), side="right").reshape(c.shape)
    k = pos - (np.arange(rows) * m)[:, None]
    below = np.take_along_axis(csum, k, axis=1)
    total = csum[:, -1:]
    return (c * (2 * k - m) - 2.0 * below + total) / m


def solve_ml(log_ratio, max_iter=100):
    """Root of sum_i (R_i - 1) / (q (R_i - 1) + 1) = 0 on [0, 1], row-wise.

    Returns (q, failed, clipped). Rows violating the uniqueness condition are
    clipped: q = 0 when mean R <= 1 and q = 1 when mean 1/R <= 1. Rows with
    every R_i = 1 fail.
    """
    lr = np.clip(np.atleast_2d(log_ratio), -_LOG_RATIO_CAP, _LOG_RATIO_CAP)
    d = np.expm1(lr)
    failed = np.all(np.abs(lr) < 1e-15, axis=1)
    mean_r = np.exp(lr).mean(axis=1)
    mean_inv = np.exp(-lr).mean(axis=1)
    at_zero = ~failed & (mean_r <= 1.0)
    at_one = ~failed & ~at_zero & (mean_inv <= 1.0)
    q = np.where(at_one, 1.0, 0.0)
    interior = ~(failed | at_zero | at_one)
    if interior.any():
        di = d[interior]
        lo = np.zeros(di.shape[0])
        hi = np.ones(di.shape[0])
        qi = np.full(di.shape[0], 0.5)
        for _ in range(max_iter):
            denom = qi[:, None] * di + 1.0
            f = (di / denom).sum(axis=1)
            fp = -((di / denom) ** 2).sum(axis=1)
            lo = np.where(f > 0, qi, lo)
            hi = np.where(f > 0, hi, qi)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = qi - f / fp
            bad = ~np.isfinite(newton) | (newton <= lo) | (newton >= hi)
            nxt = np.where(bad, 0.5 * (lo + hi), newton)
            done = (np.abs(nxt - qi) < 1e-14) | (hi - lo < 1e-13)
            qi = nxt
            if done.all():
                break
        q[interior] = qi
    clipped = (at_zero & (mean_r < 1.0)) | (at_one & (mean_inv < 1.0))
    return q, failed, clipped


def minimise_hellinger(freqs, p_pos, p_neg, coarse=101, iters=40):
    """Row-wise argmin over [0, 1] of the binned squared Hellinger objective."""
    root_f = np.sqrt(freqs)  # (B, b)

    def objective(q):  # q (B, k) -> (B, k)
        mix = q[:, :, None] * p_pos[:, None, :] + (1.0 - q[:, :, None]) * p_neg[:, None, :]
        return ((root_f[:, None, :] - np.sqrt(np.maximum(mix, 0.0))) ** 2).sum(axis=2)

    rows = freqs.shape[0]
    grid = np.linspace(0.0, 1.0, coarse)
    values = objective(np.broadcast_to(grid, (rows, coarse)))
    k = values.argmin(axis=1)
    lo = grid[np.maximum(k - 1, 0)]
    hi = grid[np.minimum(k + 1, coarse - 1)]
    # golden-section refinement of a convex objective
    ratio = (np.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - ratio * (hi - lo)
    x2 = lo + ratio * (hi - lo)
    f1 = objective(x1[:, None])[:, 0]
    f2 = objective(x2[:, None])[:, 0]
    for _ in range(iters):
        left = f1 <= f2
        hi = np.where(left, x2, hi)
        lo = np.where(left, lo, x1)
        x2n = np.where(left, x1, lo + ratio * (hi - lo))
        x1n = np.where(left, hi - ratio * (hi - lo), x2)
        fn = objective(np.where(left, x1n, x2n)[:, None])[:, 0]
        f1, f2 = np.where(left, fn, f2), np.where(left, f1, fn)
        x1, x2 = x1n, x2n
    q = 0.5 * (lo + hi)
    # endpoints are admissible minimisers too
    cand = np.stack([np.zeros(rows), q, np.ones(rows)], axis=1)
    best = objective(cand).argmin(axis=1)
    return cand[np.arange(rows), best]


def energy_quotient(h_test, h_pos, h_neg):
    """Numerator A and denominator B of the energy-distance estimate A / B.

    All arguments are score values in [0, 1]; every expectation is the exact
    empirical double mean.
    """
    h_test, h_pos, h_neg = (np.asarray(v, dtype=float).ravel()[None, :] for v in (h_test, h_pos, h_neg))
    e_qn = _mean_abs_diff(h_test, h_neg).mean()
    e_qp = _mean_abs_diff(h_test, h_pos).mean()
    e_nn = _mean_abs_diff(h_neg, h_neg).mean()
    e_pp = _mean_abs_diff(h_pos, h_pos).mean()
    e_pn = _mean_abs_diff(h_pos, h_neg).mean()
    return float(e_qn - e_qp - e_nn + e_pn), float(2.0 * e_pn - e_nn - e_pp)


@dataclass
class Calibration:
    """Training-side functionals of a posterior model, stacked over Bc rows.

    ``Bc`` is 1 for a single model (including the exact population model)
    and equals the number of bootstrap replicates when every replicate
    refits its own model.
    """

    a: np.ndarray
    b: np.ndarray
    prevalence: float
    tpr: np.ndarray            # (Bc, 20): grid thresholds then the prevalence threshold
    fpr: np.ndarray
    mean_pos: np.ndarray       # (Bc,)
    mean_neg: np.ndarray
    pi_mean_pos: np.ndarray    # (Bc, 19)
    pi_mean_neg: np.ndarray
    hellinger: Dict[int, tuple]  # bins -> (bounds (Bc, bins-1), p_pos (Bc, bins), p_neg (Bc, bins))
    energy_train: tuple        # (e_nn, e_pp, e_pn) each (Bc,)
    params: Optional[BinormalParams] = None
    h_pos: Optional[np.ndarray] = None   # finite mode: posterior on training subsamples
    h_neg: Optional[np.ndarray] = None
    separated: Optional[np.ndarray] = None

    @property
    def thresholds(self):
        return np.append(GRID, self.prevalence)

    @property
    def is_population(self):
        return self.params is not None

    @property
    def rows(self):
        return self.a.shape[0]

    def take(self, rows):
        """Calibration restricted to the given rows (finite mode only)."""
        if self.rows == 1:
            return self
        sel = lambda v: None if v is None else v[rows]
        return Calibration(
            a=self.a[rows], b=self.b[rows], prevalence=self.prevalence,
            tpr=self.tpr[rows], fpr=self.fpr[rows],
            mean_pos=self.mean_pos[rows], mean_neg=self.mean_neg[rows],
            pi_mean_pos=self.pi_mean_pos[rows], pi_mean_neg=self.pi_mean_neg[rows],
            hellinger={k: tuple(v[rows] for v in t) for k, t in self.hellinger.items()},
            energy_train=tuple(v[rows] for v in self.energy_train),
            params=self.params, h_pos=sel(self.h_pos), h_neg=sel(self.h_neg),
            separated=sel(self.separated),
        )

    def posterior(self, x):
        """Posterior on a (B, n) feature matrix."""
        return expit(-(self.a[:, None] * x + self.b[:, None]))

    def log_ratio(self, x):
        """log f+(x)/f-(x): exact in population mode, implied by the fitted posterior otherwise."""
        if self.is_population:
            return log_density_ratio(self.params, x)
        p = self.prevalence
        return np.log((1.0 - p) / p) - (self.a[:, None] * x + self.b[:, None])

    # energy-distance test-side terms ------------------------------------
    def energy_point_terms(self, x):
        """E_{P-}|h(x_j) - h(V)| and E_{P+}|h(x_j) - h(V)| for each entry of x."""
        if self.is_population:
            return self._population_point_terms(x)
        hx = self.posterior(x)
        return _mean_abs_diff(hx, self.h_neg), _mean_abs_diff(hx, self.h_pos)

    def _population_point_terms(self, x):
        params = self.params
        a, b = float(self.a[0]), float(self.b[0])
        lo, _ = population_window(params.mu, params.nu, params.sigma)
        x = np.asarray(x, dtype=float)
        hx = expit(-(a * x + b))
        sign = -np.sign(a) if a != 0 else 1.0
        out = []
        for centre, total in ((params.mu, self.mean_neg[0]), (params.nu, self.mean_pos[0])):
            integrand = lambda t, c=centre: normal_pdf(t, c, params.sigma) * expit(-(a * t + b))
            partial = cumulative_integrals(integrand, lo, x)
            cdf = normal_cdf(x, centre, params.sigma)
            out.append(sign * (hx * (2.0 * cdf - 1.0) + total - 2.0 * partial))
        return out[0], out[1]


def _population_calibration(params: BinormalParams, model: PosteriorModel, p: float, tol=1e-10):
    a, b = model.a, model.b
    lo, hi = population_window(params.mu, params.nu, params.sigma)
    spec = QuadratureSpec(lo, hi, tol)
    mu, nu, sd = params.mu, params.nu, params.sigma

    thresholds = np.append(GRID, p)
    if a == 0:
        tpr = fpr = np.full(thresholds.size, np.nan)
    else:
        c = (np.log(1.0 / thresholds - 1.0) - b) / a
        if a < 0:
            tpr, fpr = 1.0 - normal_cdf(c, nu, sd), 1.0 - normal_cdf(c, mu, sd)
        else:
            tpr, fpr = normal_cdf(c, nu, sd), normal_cdf(c, mu, sd)

    def class_mean(centre, intercept):
        return integrate(lambda x: normal_pdf(x, centre, sd) * expit(-(a * x + intercept)), spec)

    mean_pos, mean_neg = class_mean(nu, b), class_mean(mu, b)
    b_pi = shifted_intercept(b, model.prevalence, GRID)
    pi_pos = np.array([class_mean(nu, bp) for bp in b_pi])
    pi_neg = np.array([class_mean(mu, bp) for bp in b_pi])

    hell = {}
    for bins in sorted(set(HELLINGER_BINS.values())):
        bounds = hellinger_boundaries(mu, nu, sd, bins)[None, :]
        edges = np.concatenate([[-np.inf], bounds[0], [np.inf]])
        p_pos = np.diff(normal_cdf(edges, nu, sd))[None, :]
        p_neg = np.diff(normal_cdf(edges, mu, sd))[None, :]
        hell[bins] = (bounds, p_pos, p_neg)

    def weighted(c1, c2):
        return integrate(
            lambda x: normal_pdf(x, c1, sd) * normal_cdf(x, c2, sd) * expit(-(a * x + b)), spec)

    sign = -np.sign(a) if a != 0 else 1.0
    e_nn = sign * (4.0 * weighted(mu, mu) - 2.0 * mean_neg)
    e_pp = sign * (4.0 * weighted(nu, nu) - 2.0 * mean_pos)
    e_pn = sign * (2.0 * weighted(mu, nu) - mean_neg + 2.0 * weighted(nu, mu) - mean_pos)

    one = lambda v: np.atleast_1d(np.asarray(v, dtype=float))
    return Calibration(
        a=one(a), b=one(b), prevalence=p,
        tpr=np.atleast_2d(tpr), fpr=np.atleast_2d(fpr),
        mean_pos=one(mean_pos), mean_neg=one(mean_neg),
        pi_mean_pos=pi_pos[None, :], pi_mean_neg=pi_neg[None, :],
        hellinger=hell, energy_train=(one(e_nn), one(e_pp), one(e_pn)),
        params=params,
    )


def _sample_calibration(a, b, pos, neg, separated=None):
    """Empirical functionals for a stack of models and training samples.

    a, b : (Bc,); pos : (Bc, m_plus); neg : (Bc, m_minus).
    """
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    pos, neg = np.atleast_2d(pos), np.atleast_2d(neg)
    m_plus, m_minus = pos.shape[1], neg.shape[1]
    p_hat = m_plus / (m_plus + m_minus)

    h_pos = expit(-(a[:, None] * pos + b[:, None]))
    h_neg = expit(-(a[:, None] * neg + b[:, None]))
    thresholds = np.append(GRID, p_hat)
    tpr = (h_pos[:, :, None] >= thresholds).mean(axis=1)
    fpr = (h_neg[:, :, None] >= thresholds).mean(axis=1)
    # a zero slope makes every threshold classifier constant
    flat = a == 0
    if flat.any():
        tpr[flat] = np.nan
        fpr[flat] = np.nan

    b_pi = shifted_intercept(b[:, None], p_hat, GRID[None, :])  # (Bc, 19)
    pi_pos = expit(-(a[:, None, None] * pos[:, :, None] + b_pi[:, None, :])).mean(axis=1)
    pi_neg = expit(-(a[:, None, None] * neg[:, :, None] + b_pi[:, None, :])).mean(axis=1)

    mu_hat, nu_hat = neg.mean(axis=1), pos.mean(axis=1)
    ss = ((pos - nu_hat[:, None]) ** 2).sum(axis=1) + ((neg - mu_hat[:, None]) ** 2).sum(axis=1)
    dof = max(m_plus + m_minus - 2, 1)
    sd_hat = np.sqrt(ss / dof)
    sd_hat = np.where(sd_hat > 0, sd_hat, 1e-12)
    hell = {}
    for bins in sorted(set(HELLINGER_BINS.values())):
        bounds = hellinger_boundaries(mu_hat, nu_hat, sd_hat, bins)
        p_pos = _bin_freqs(pos, bounds, bins)
        p_neg = _bin_freqs(neg, bounds, bins)
        # floor empty bins so the square-root objective keeps a usable slope
        p_pos = np.maximum(p_pos, 1.0 / (2 * m_plus))
        p_neg = np.maximum(p_neg, 1.0 / (2 * m_minus))
        p_pos /= p_pos.sum(axis=1, keepdims=True)
        p_neg /= p_neg.sum(axis=1, keepdims=True)
        hell[bins] = (bounds, p_pos, p_neg)

    e_nn = _mean_abs_diff(h_neg, h_neg).mean(axis=1)
    e_pp = _mean_abs_diff(h_pos, h_pos).mean(axis=1)
    e_pn = _mean_abs_diff(h_pos, h_neg).mean(axis=1)

    return Calibration(
        a=a, b=b, prevalence=p_hat, tpr=tpr, fpr=fpr,
        mean_pos=h_pos.mean(axis=1), mean_neg=h_neg.mean(axis=1),
        pi_mean_pos=pi_pos, pi_mean_neg=pi_neg,
        hellinger=hell, energy_train=(e_nn, e_pp, e_pn),
        h_pos=h_pos, h_neg=h_neg,
        separated=np.zeros(a.size, bool) if separated is None else separated,
    )


def calibrate(ctx: TrainingContext, model: PosteriorModel) -> Calibration:
    """Training-side functionals of ``model`` under the context's training data."""
    if ctx.is_infinite:
        return _population_calibration(ctx.params, model, ctx.p)
    return _sample_calibration(model.a, model.b, ctx.sample.positives[None, :],
                               ctx.sample.negatives[None, :],
                               separated=np.array([model.separated]))


def calibrate_resamples(pos, neg):
    """Refit the logistic model on each row of (pos, neg) and calibrate it."""
    pos, neg = np.atleast_2d(pos), np.atleast_2d(neg)
    x = np.concatenate([pos, neg], axis=1)
    y = np.concatenate([np.ones_like(pos), np.zeros_like(neg)], axis=1)
    a, b, separated = fit_logistic_batch(x, y)
    return _sample_calibration(a, b, pos, neg, separated)


def evaluate(cal: Calibration, x_base, idx=None, methods: Sequence[str] = METHODS,
             energy_terms=None) -> Dict[str, MethodBatch]:
    """Run ``methods`` on the test samples ``x_base[idx]`` (or ``x_base`` itself).

    Parameters
    ----------
    cal : Calibration with 1 row or one row per test sample.
    x_base : ndarray, shape (n,)
        Original test features.
    idx : ndarray of int, shape (B, n), optional
        Bootstrap resampling indices into ``x_base``.
    energy_terms : tuple of ndarray, optional
        Precomputed population energy point terms for ``x_base``.
    """
    x_base = np.asarray(x_base, dtype=float).ravel()
    x = x_base[None, :] if idx is None else x_base[idx]
    rows = x.shape[0]
    methods = tuple(methods)
    out: Dict[str, MethodBatch] = {}

    def col(arr):
        return np.broadcast_to(arr, (rows,) + arr.shape[1:])

    need_h = any(m in methods for m in ("ACC50", "ACCp", "ACCv", "MS", "APCC", "Energy"))
    h = cal.posterior(x) if need_h else None

    if any(m in methods for m in ("ACC50", "ACCp", "ACCv", "MS")):
        rate = (h[:, :, None] >= cal.thresholds).mean(axis=1)  # (B, 20)
        tpr, fpr = col(cal.tpr), col(cal.fpr)
        acc = _ratio_batch(rate, fpr, tpr)
        den = tpr - fpr
        undefined = ~np.isfinite(den) | (np.abs(den) < _EPS)
        for tag, j in (("ACC50", _I50), ("ACCp", _IP)):
            if tag in methods:
                out[tag] = MethodBatch(acc.value[:, j], acc.raw[:, j], acc.failed[:, j] | undefined[:, j],
                                       acc.clipped[:, j],
                                       {"threshold": np.full(rows, cal.thresholds[j]),
                                        "rate": rate[:, j], "tpr": tpr[:, j], "fpr": fpr[:, j]})
        g = slice(0, GRID.size)
        if "ACCv" in methods:
            with np.errstate(divide="ignore", invalid="ignore"):
                obj = rate[:, g] * (1.0 - rate[:, g]) / den[:, g] ** 2
            obj = np.where(undefined[:, g], np.inf, obj)
            j = obj.argmin(axis=1)
            r = np.arange(rows)
            failed = ~np.isfinite(obj[r, j])
            out["ACCv"] = MethodBatch(acc.value[r, j], acc.raw[r, j], failed, acc.clipped[r, j] & ~failed,
                                      {"threshold": GRID[j], "rate": rate[r, j], "tpr": tpr[r, j],
                                       "fpr": fpr[r, j]})
        if "MS" in methods:
            ok = ~undefined[:, g] & (den[:, g] > MS_MIN_DENOMINATOR)
            vals = np.where(ok, acc.value[:, g], np.nan)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                med = np.nanmedian(vals, axis=1)
            failed = ~ok.any(axis=1)
            out["MS"] = MethodBatch(np.where(failed, np.nan, med), med, failed, np.zeros(rows, bool),
                                    {"qualifying": ok.sum(axis=1)})

    if "APCC" in methods:
        res = _ratio_batch(h.mean(axis=1), col(cal.mean_neg[:, None])[:, 0], col(cal.mean_pos[:, None])[:, 0])
        res.extra = {"test_mean": h.mean(axis=1), "mean_pos": col(cal.mean_pos[:, None])[:, 0],
                     "mean_neg": col(cal.mean_neg[:, None])[:, 0]}
        out["APCC"] = res

    if "APCCv" in methods:
        b_pi = shifted_intercept(cal.b[:, None], cal.prevalence, GRID[None, :])
        hp = expit(-(cal.a[:, None, None] * x[:, :, None] + b_pi[:, None, :]))  # (B, n, 19)
        m_q = hp.mean(axis=1)
        var_q = hp.var(axis=1)
        pos, neg = col(cal.pi_mean_pos), col(cal.pi_mean_neg)
        den = pos - neg
        with np.errstate(divide="ignore", invalid="ignore"):
            obj = np.where(np.abs(den) < _EPS, np.inf, var_q / den ** 2)
        j = obj.argmin(axis=1)
        r = np.arange(rows)
        res = _ratio_batch(m_q[r, j], neg[r, j], pos[r, j])
        res.failed = res.failed | ~np.isfinite(obj[r, j])
        res.extra = {"pi": GRID[j], "test_mean": m_q[r, j], "mean_pos": pos[r, j], "mean_neg": neg[r, j]}
        out["APCCv"] = res

    for tag, bins in HELLINGER_BINS.items():
        if tag not in methods:
            continue
        bounds, p_pos, p_neg = cal.hellinger[bins]
        freqs = _bin_freqs(x, bounds, bins)
        q = minimise_hellinger(freqs, col(p_pos), col(p_neg))
        out[tag] = MethodBatch(q, q.copy(), np.zeros(rows, bool), np.zeros(rows, bool))

    if "Energy" in methods:
        if cal.is_population:
            if energy_terms is None:
                energy_terms = cal.energy_point_terms(x_base)
            d_neg, d_pos = energy_terms
            if idx is not None:
                d_neg, d_pos = d_neg[idx], d_pos[idx]
            else:
                d_neg, d_pos = d_neg[None, :], d_pos[None, :]
        else:
            d_neg, d_pos = cal.energy_point_terms(x)
        e_qn, e_qp = d_neg.mean(axis=1), d_pos.mean(axis=1)
        e_nn, e_pp, e_pn = (col(v[:, None])[:, 0] for v in cal.energy_train)
        num = e_qn - e_qp - e_nn + e_pn
        den = 2.0 * e_pn - e_nn - e_pp
        failed = np.abs(den) < _EPS
        with np.errstate(divide="ignore", invalid="ignore"):
            raw = np.where(failed, np.nan, num / np.where(failed, 1.0, den))
        out["Energy"] = MethodBatch(np.clip(raw, 0.0, 1.0), raw, failed, np.zeros(rows, bool),
                                    {"A": num, "B": den})

    if "ML" in methods:
        lr = cal.log_ratio(x)
        lr = np.broadcast_to(lr, x.shape)
        q, failed, clipped = solve_ml(lr)
        out["ML"] = MethodBatch(np.where(failed, np.nan, q), q, failed, clipped)

    unknown = set(methods) - set(out) - set(METHODS)
    if unknown:
        raise ValueError(f"unknown methods: {sorted(unknown)}")
    return out


# ---------------------------------------------------------------------------
# single-sample convenience layer

def _run(ctx, model, test, tag):
    cal = calibrate(ctx, model)
    return evaluate(cal, _features(test), methods=(tag,))[tag].item(tag)


def _features(test):
    return test.features if isinstance(test, UnlabeledSample) else np.asarray(test, dtype=float).ravel()


def estimate(ctx, model, test, methods=METHODS):
    """Every requested method on one test sample, as PrevalenceEstimate objects."""
    cal = calibrate(ctx, model)
    res = evaluate(cal, _features(test), methods=methods)
    return {tag: res[tag].item(tag) for tag in methods}


def estimate_acc(ctx, model, test, t):
    """Adjusted classify & count with the classifier 'posterior >= t'."""
    x = _features(test)
    try:
        rates = rates_for_threshold(ctx, model, t)
    except DegenerateClassifierError:
        return PrevalenceEstimate(float("nan"), float("nan"), failed=True, method_tag="ACC")
    rate = float(np.mean(expit(-(model.a * x + model.b)) >= t))
    res = _ratio_batch(np.array([rate]), np.array([rates.fpr]), np.array([rates.tpr]))
    tag = "ACC50" if t == 0.5 else ("ACCp" if t == ctx.prevalence else "ACC")
    est = res.item(tag)
    return PrevalenceEstimate(est.value, est.raw_value, est.clipped, est.failed, tag,
                              {"rate": rate, "tpr": rates.tpr, "fpr": rates.fpr})


def select_threshold_accv(ctx, model, test):
    est = _run(ctx, model, test, "ACCv")
    if est.failed:
        raise ValueError("no grid threshold has a non-zero TPR - FPR")
    return float(est.detail["threshold"])


def estimate_ms(ctx, model, test):
    return _run(ctx, model, test, "MS")


def estimate_apcc(ctx, model, test, pi=None):
    """Adjusted probabilistic classify & count with h = posterior or h_pi."""
    x = _features(test)
    means = means_for_h(ctx, model, pi)
    h = posterior_prob(model, x) if pi is None else h_pi(model, pi, x)
    res = _ratio_batch(np.array([h.mean()]), np.array([means.mean_neg]), np.array([means.mean_pos]))
    est = res.item("APCC" if pi is None else "APCC_pi")
    return PrevalenceEstimate(est.value, est.raw_value, est.clipped, est.failed, est.method_tag,
                              {"test_mean": float(h.mean()), "mean_pos": means.mean_pos,
                               "mean_neg": means.mean_neg})


def select_pi_apccv(ctx, model, test):
    est = _run(ctx, model, test, "APCCv")
    if est.failed:
        raise ValueError("no grid value of pi has a non-zero denominator")
    return float(est.detail["pi"])


def estimate_hellinger(ctx, model, test, bins):
    if bins not in (4, 8):
        raise ValueError(f"bins must be 4 or 8, got {bins}")
    return _run(ctx, model, test, f"H{bins}")


def estimate_energy(ctx, model, test):
    return _run(ctx, model, test, "Energy")


def estimate_ml(ctx, model, test):
    return _run(ctx, model, test, "ML")


def ml_ratios(ctx, model, test):
    """Density ratios f+/f- at the test points (exact or implied by the fitted posterior)."""
    cal = calibrate(ctx, model)
    lr = np.clip(np.atleast_2d(cal.log_ratio(_features(test)[None, :])), -_LOG_RATIO_CAP, _LOG_RATIO_CAP)
    return np.exp(lr[0])


def ml_asymptotic_variance(estimate: PrevalenceEstimate, ratios) -> float:
    """Plug-in asymptotic variance n / sum_i ((R_i - 1)/(q (R_i - 1) + 1))^2."""
    if estimate.failed:
        raise ValueError("cannot compute the variance of a failed estimate")
    r = np.asarray(ratios, dtype=float)
    d = r - 1.0
    terms = d / (estimate.value * d + 1.0)
    info = float(np.sum(terms ** 2))
    if info == 0.0:
        return float("inf")
    return r.size / info
