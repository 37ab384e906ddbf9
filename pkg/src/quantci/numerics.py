"""Normal and beta distribution kernels plus adaptive 1-D quadrature.

Every closed-form ("infinite training sample") code path in the package goes
through these helpers, so they are written to accept scalars or numpy arrays.
"""

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import special

__all__ = [
    "QuadratureSpec",
    "ConvergenceError",
    "normal_pdf",
    "normal_cdf",
    "normal_quantile",
    "beta_quantile",
    "integrate",
    "cumulative_integrals",
    "population_window",
]


class ConvergenceError(RuntimeError):
    """Raised when adaptive quadrature exhausts its subdivision budget.

    The best available estimate is kept on ``estimate`` and the remaining
    error bound on ``error``.
    """

    def __init__(self, message, estimate, error):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


@dataclass(frozen=True)
class QuadratureSpec:
    lower_bound: float
    upper_bound: float
    abs_tolerance: float = 1e-10
    max_subdivisions: int = 200

    def __post_init__(self):
        if not self.lower_bound < self.upper_bound:
            raise ValueError(
                f"lower_bound must be < upper_bound, got {self.lower_bound} >= {self.upper_bound}"
            )
        if not self.abs_tolerance > 0:
            raise ValueError("abs_tolerance must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")


def normal_pdf(x, mean=0.0, sd=1.0):
    z = (np.asarray(x, dtype=float) - mean) / sd
    return np.exp(-0.5 * z * z) / (sd * np.sqrt(2.0 * np.pi))


def normal_cdf(x, mean=0.0, sd=1.0):
    """Normal distribution function, saturating to 0/1 in the tails."""
    if not sd > 0:
        raise ValueError(f"sd must be positive, got {sd}")
    return special.ndtr((np.asarray(x, dtype=float) - mean) / sd)


def normal_quantile(p, mean=0.0, sd=1.0):
    if not sd > 0:
        raise ValueError(f"sd must be positive, got {sd}")
    p_arr = np.asarray(p, dtype=float)
    if np.any((p_arr <= 0) | (p_arr >= 1)) or np.any(np.isnan(p_arr)):
        raise ValueError(f"normal_quantile requires 0 < p < 1, got {p}")
    return mean + sd * special.ndtri(p_arr)


def beta_quantile(p, shape1, shape2):
    """Quantile of the Beta(shape1, shape2) distribution."""
    if not 0 < p < 1:
        raise ValueError(f"beta_quantile requires 0 < p < 1, got {p}")
    if not (shape1 > 0 and shape2 > 0):
        raise ValueError(f"beta shapes must be positive, got ({shape1}, {shape2})")
    return float(special.betaincinv(shape1, shape2, p))


# Gauss-Kronrod 7/15 nodes and weights on [-1, 1].
_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KRONROD_W = np.concatenate([_WGK[:-1], _WGK[::-1]])
# Gauss points are the odd-indexed Kronrod abscissae.
_GAUSS_W = np.zeros(15)
_GAUSS_W[[1, 3, 5, 7, 9, 11, 13]] = np.concatenate([_WG[:-1], _WG[::-1]])


def _gk15(f, lo, hi):
    """Kronrod estimates and error bounds for a vector of panels."""
    centre = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x = centre[:, None] + half[:, None] * _NODES[None, :]
    fx = np.asarray(f(x.ravel()), dtype=float).reshape(x.shape)
    kronrod = half * (fx @ _KRONROD_W)
    gauss = half * (fx @ _GAUSS_W)
    return kronrod, np.abs(kronrod - gauss)


def integrate(f: Callable, spec: QuadratureSpec) -> float:
    """Adaptive Gauss-Kronrod quadrature of a vectorised integrand.

    ``f`` must accept a 1-D array of abscissae. Panels whose error bound is
    above their share of ``spec.abs_tolerance`` are bisected until the total
    bound meets the tolerance. Raises :class:`ConvergenceError` when more
    than ``spec.max_subdivisions`` bisection rounds would be needed.
    """
    lo = np.array([spec.lower_bound], dtype=float)
    hi = np.array([spec.upper_bound], dtype=float)
    width = spec.upper_bound - spec.lower_bound
    done_value = 0.0
    done_error = 0.0
    for _ in range(spec.max_subdivisions):
        value, error = _gk15(f, lo, hi)
        if not np.all(np.isfinite(value)):
            raise ValueError("integrand is not finite on the interval")
        # each panel may spend tolerance in proportion to its width
        allowed = spec.abs_tolerance * (hi - lo) / width
        ok = error <= allowed
        done_value += value[ok].sum()
        done_error += error[ok].sum()
        if ok.all():
            return float(done_value)
        lo, hi = lo[~ok], hi[~ok]
        mid = 0.5 * (lo + hi)
        lo, hi = np.concatenate([lo, mid]), np.concatenate([mid, hi])
    value, error = _gk15(f, lo, hi)
    raise ConvergenceError(
        f"subdivision budget of {spec.max_subdivisions} exhausted",
        estimate=float(done_value + value.sum()),
        error=float(done_error + error.sum()),
    )


def cumulative_integrals(f: Callable, lower: float, points, abs_tolerance: float = 1e-10):
    """Integrals of ``f`` from ``lower`` up to each of ``points``.

    Points at or below ``lower`` get 0. The pieces between consecutive sorted
    points are integrated with :func:`integrate` and accumulated.
    """
    points = np.asarray(points, dtype=float)
    shape = points.shape
    flat = points.ravel()
    order = np.argsort(flat)
    knots = np.maximum(flat[order], lower)
    starts = np.concatenate([[lower], knots[:-1]])
    pieces = np.zeros(knots.size)
    live = knots > starts
    if live.any():
        lo, hi = starts[live], knots[live]
        value, error = _gk15(f, lo, hi)
        span = max(knots[-1] - lower, np.finfo(float).tiny)
        allowed = abs_tolerance * (hi - lo) / span
        for j in np.flatnonzero(error > allowed):
            value[j] = integrate(f, QuadratureSpec(lo[j], hi[j], max(allowed[j], 1e-15)))
        pieces[live] = value
    result = np.empty(flat.size)
    result[order] = np.cumsum(pieces)
    return result.reshape(shape)


def population_window(mu: float, nu: float, sigma: float, width: float = 8.0):
    """Integration window covering both class-conditional normals."""
    return min(mu, nu) - width * sigma, max(mu, nu) + width * sigma
