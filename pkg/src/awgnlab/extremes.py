"""Moments of the maximum of ``n`` i.i.d. ``N(0, 1/n)`` variables.

With ``u = sqrt(t)`` the exact tail of ``Z_max**2`` is

    S(u) = P(Z_max >= u) + P(Z_max <= -u)
         = -expm1(n log Phi(u sqrt(n))) + exp(n log Phi(-u sqrt(n))),

and the moments are one-dimensional integrals of ``S`` against
``2u``, ``4u**3`` and ``2u exp(u**2)``.  Truncation of the infinite range
uses the explicit exponential tail bounds of :func:`zmax_tail_bounds`.
"""

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import log_ndtr, logsumexp

from .quadrature import adaptive_gauss_legendre
from .rng import batch_means_se, batch_sizes, stream, stream_id

__all__ = [
    "Moment",
    "MaxGaussQuery",
    "zmax_exact",
    "zmax_mc",
    "zmax_tail_bounds",
    "zmax_exact_tails",
    "rate_fit",
    "RateFit",
]

TRUNCATION_RTOL = 1e-18


class Moment(str, enum.Enum):
    SQUARE = "square"
    FOURTH = "fourth"
    EXP_SQUARE = "exp_square"


@dataclass(frozen=True)
class MaxGaussQuery:
    n: int
    moment: Moment = Moment.SQUARE
    trials: int = 0

    def __post_init__(self):
        object.__setattr__(self, "moment", Moment(self.moment))
        if int(self.n) != self.n or self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.moment is Moment.EXP_SQUARE and self.n < 3:
            raise ValueError("E[exp(Z_max^2)] is infinite unless n >= 3")


def zmax_exact_tails(n, t):
    """Exact ``(P(Z_max <= -sqrt t), P(Z_max >= sqrt t))``."""
    x = np.sqrt(n * np.asarray(t, dtype=float))
    lower = np.exp(n * log_ndtr(-x))
    upper = -np.expm1(n * log_ndtr(x))
    return lower, upper


def zmax_tail_bounds(n, t):
    """Exponential bounds on the two tails of ``Z_max`` at level ``sqrt t``.

    ``P(Z_max <= -sqrt t) <= 2**-n exp(-n**2 t / 2)`` and
    ``P(Z_max >= sqrt t) <= (n/2) e^{-nt/2} / (1 - e^{-nt/2} / 2)``.
    """
    t = np.asarray(t, dtype=float)
    e = np.exp(-n * t / 2.0)
    lower = np.exp(-n * np.log(2.0) - n * n * t / 2.0)
    upper = (n / 2.0) * e / (1.0 - 0.5 * e)
    return lower, upper


def _tail(n, u):
    x = u * np.sqrt(n)
    return -np.expm1(n * log_ndtr(x)) + np.exp(n * log_ndtr(-x))


def _weight(moment):
    if moment is Moment.SQUARE:
        return lambda u: 2.0 * u
    if moment is Moment.FOURTH:
        return lambda u: 4.0 * u ** 3
    return lambda u: 2.0 * u * np.exp(u * u)


def _truncation_bound(n, moment, tmax):
    """Bound on the moment integrand mass beyond ``t = tmax``.

    Uses both tail bounds with ``1 - e^{-nt/2}/2 >= 1/2``.
    """
    a = n / 2.0
    low = 2.0 ** -n
    b = n * n / 2.0
    if moment is Moment.SQUARE:
        return n * math.exp(-a * tmax) / a + low * math.exp(-b * tmax) / b
    if moment is Moment.FOURTH:
        # integral 2t * bound(t) dt
        up = 2.0 * n * math.exp(-a * tmax) * (tmax / a + 1.0 / a ** 2)
        lo = 2.0 * low * math.exp(-b * tmax) * (tmax / b + 1.0 / b ** 2)
        return up + lo
    # integral e^t * bound(t) dt, needs a > 1
    return (n * math.exp(-(a - 1.0) * tmax) / (a - 1.0)
            + low * math.exp(-(b - 1.0) * tmax) / (b - 1.0))


def zmax_exact(query):
    """Exact moment of ``Z_max`` by adaptive quadrature of the tail integral.

    ``query`` is a :class:`MaxGaussQuery` (or an ``(n, moment)`` tuple).
    The range is extended by doubling until the analytic tail bound falls
    below ``1e-18`` of the accumulated integral.
    """
    if not isinstance(query, MaxGaussQuery):
        query = MaxGaussQuery(*query)
    n, moment = query.n, query.moment
    weight = _weight(moment)

    def integrand(u):
        return weight(u) * _tail(n, u)

    # start near the bulk of Z_max^2 ~ 2 log(n) / n
    umax = math.sqrt(max(2.0 * math.log(max(n, 2)), 1.0) * 4.0 / n)
    total, _ = adaptive_gauss_legendre(integrand, 0.0, umax, order=32,
                                       atol=1e-20, rtol=1e-14)
    lo = umax
    for _ in range(64):
        if _truncation_bound(n, moment, lo * lo) <= TRUNCATION_RTOL * abs(total):
            break
        hi = 2.0 * lo
        piece, _ = adaptive_gauss_legendre(integrand, lo, hi, order=32,
                                           atol=1e-22, rtol=1e-14)
        total += piece
        lo = hi
    else:
        raise RuntimeError(f"tail integral did not converge for n={n}")
    if moment is Moment.EXP_SQUARE:
        total += 1.0
    return float(total)


def zmax_mc(query, seed, batches=100):
    """Monte Carlo ``(mean, std_error)`` of the requested moment.

    Trials are split into batches drawn from disjoint streams; the
    exponential moment is accumulated in the log domain.
    """
    if not isinstance(query, MaxGaussQuery):
        query = MaxGaussQuery(*query)
    n, moment = query.n, query.moment
    if query.trials < 1:
        raise ValueError("trials must be >= 1")
    sizes = batch_sizes(query.trials, batches)
    sums, counts, logsums = [], [], []
    for b, size in enumerate(sizes):
        rng = stream(seed, stream_id("maxgauss", b))
        zmax = np.empty(size)
        chunk = max(1, 2_000_000 // n)
        for start in range(0, size, chunk):
            stop = min(size, start + chunk)
            zmax[start:stop] = rng.standard_normal((stop - start, n)).max(axis=1)
        z2 = zmax * zmax / n
        if moment is Moment.SQUARE:
            sums.append(z2.sum())
        elif moment is Moment.FOURTH:
            sums.append((z2 * z2).sum())
        else:
            logsums.append(logsumexp(z2))
        counts.append(size)
    if moment is Moment.EXP_SQUARE:
        logsums = np.asarray(logsums)
        shift = logsums.max()
        sums = np.exp(logsums - shift)
        mean, se = batch_means_se(sums, counts)
        return float(mean * math.exp(shift)), float(se * math.exp(shift))
    return batch_means_se(sums, counts)


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    slope_se: float
    rejected: tuple = ()

    def __iter__(self):
        return iter((self.slope, self.intercept, self.r2))


def rate_fit(points):
    """Least-squares fit of ``log(value)`` against ``log(x)``.

    ``points`` is a sequence of ``(x, value)``.  Nonpositive values are
    dropped with a warning and listed in ``RateFit.rejected``.  Needs at
    least three usable points.
    """
    pts = [(float(x), float(v)) for x, v in points]
    rejected = tuple(p for p in pts if not (p[1] > 0 and np.isfinite(p[1])))
    if rejected:
        warnings.warn(f"rate_fit: rejected nonpositive points {rejected}")
    good = [p for p in pts if p not in rejected]
    if len(good) < 3:
        raise ValueError(f"rate_fit needs >= 3 positive points, got {len(good)}")
    lx = np.log([p[0] for p in good])
    ly = np.log([p[1] for p in good])
    (slope, intercept), res, *_ = np.polyfit(lx, ly, 1, full=True)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    ss_res = float(res[0]) if res.size else 0.0
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    dof = len(good) - 2
    sxx = float(np.sum((lx - lx.mean()) ** 2))
    slope_se = math.sqrt(ss_res / dof / sxx) if dof > 0 and sxx > 0 else 0.0
    return RateFit(float(slope), float(intercept), float(r2), slope_se, rejected)
