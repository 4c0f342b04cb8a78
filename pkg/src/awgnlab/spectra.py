"""Power spectral densities, autocovariances and sampled-channel covariances.

Conventions: a PSD ``f`` is even and nonnegative with autocovariance

    r(v) = integral f(lam) cos(v lam) dlam,

so ``r(0)`` is the average power.  The integrate-and-dump input of block
``i`` is ``V_i = delta**-0.5 * integral_{t_{i-1}}^{t_i} X(s) ds``.  Its
covariance is Toeplitz with lag-``k`` entry

    sigma_k = delta * integral f(lam) cos(k delta lam) sinc(lam delta / 2)**2 dlam,

which is what :func:`block_lags` evaluates.
"""

from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.linalg import toeplitz

from .quadrature import adaptive_gauss_legendre
from .simulate import PathRecord, SampleGrid

__all__ = [
    "BandLimitedFlat",
    "Tabulated",
    "PsdSpec",
    "InvalidPSD",
    "load_tabulated",
    "autocovariance",
    "spectral_moment",
    "block_lags",
    "block_covariance",
    "kernel_matrix",
    "gp_sample",
]

JITTER_LADDER = (1e-14, 1e-12, 1e-10)
_SINC_SERIES_CUTOFF = 1e-4
_QUAD_ORDER = 32


class InvalidPSD(ValueError):
    """Raised when a PSD violates nonnegativity, symmetry or finiteness."""


@dataclass(frozen=True)
class BandLimitedFlat:
    """Flat PSD ``P / (2 W)`` on ``[-W, W]``.

    ``W = 0`` is accepted as the DC limit: all power at zero frequency and a
    constant autocovariance ``r == P``.
    """

    P: float
    W: float

    def __post_init__(self):
        if not (np.isfinite(self.P) and np.isfinite(self.W)):
            raise InvalidPSD("P and W must be finite")
        if self.P < 0 or self.W < 0:
            raise InvalidPSD("P and W must be nonnegative")

    @property
    def support(self):
        return float(self.W)

    def density(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.W == 0:
            return np.zeros_like(lam)
        return np.where(np.abs(lam) < self.W, self.P / (2 * self.W), 0.0)


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-linear PSD through ``(lam_k, f_k)``, zero off the table.

    The table may cover ``lam >= 0`` only (it is mirrored), or a symmetric
    range about zero, in which case it must satisfy ``f(lam) == f(-lam)``.
    Only the nonnegative half is stored.
    """

    lam: np.ndarray
    values: np.ndarray
    _seg: tuple = field(init=False, repr=False)

    def __post_init__(self):
        lam = np.asarray(self.lam, dtype=float).ravel()
        vals = np.asarray(self.values, dtype=float).ravel()
        if lam.shape != vals.shape or lam.size < 2:
            raise InvalidPSD("table needs >= 2 (lambda, f) pairs of equal length")
        if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(vals))):
            raise InvalidPSD("table entries must be finite")
        if np.any(np.diff(lam) <= 0):
            raise InvalidPSD("lambda must be strictly ascending")
        if np.any(vals < 0):
            raise InvalidPSD("PSD values must be nonnegative")
        if lam[0] < 0:
            neg = lam < 0
            mirrored = np.interp(-lam[neg], lam, vals, left=0.0, right=0.0)
            if (not np.allclose(mirrored, vals[neg], rtol=1e-9, atol=1e-12)
                    or not np.isclose(-lam[0], lam[-1], rtol=1e-9)):
                raise InvalidPSD("tabulated PSD must be symmetric about 0")
            keep = lam >= 0
            if lam[keep][0] > 0:
                # crossing zero between nodes: insert the interpolated f(0)
                f0 = float(np.interp(0.0, lam, vals))
                lam = np.concatenate([[0.0], lam[keep]])
                vals = np.concatenate([[f0], vals[keep]])
            else:
                lam, vals = lam[keep], vals[keep]
        lam.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "values", vals)
        nz = [(lam[i], lam[i + 1]) for i in range(lam.size - 1)
              if vals[i] > 0 or vals[i + 1] > 0]
        object.__setattr__(self, "_seg", tuple(nz))

    @property
    def support(self):
        return float(self.lam[-1])

    def density(self, lam):
        lam = np.abs(np.asarray(lam, dtype=float))
        return np.interp(lam, self.lam, self.values, left=0.0, right=0.0)


PsdSpec = Union[BandLimitedFlat, Tabulated]


def load_tabulated(path):
    """Read a two-column ``lambda f(lambda)`` whitespace-separated table."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise InvalidPSD(f"{path}: expected two columns, got {data.shape[1]}")
    return Tabulated(data[:, 0], data[:, 1])


def _sinc(x):
    # sin(x)/x with a series near zero to avoid cancellation
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < _SINC_SERIES_CUTOFF
    xs = np.where(small, 1.0, x)
    x2 = x * x
    return np.where(small, 1.0 - x2 / 6.0 + x2 * x2 / 120.0, np.sin(xs) / xs)


def _half_integral(psd, weight, atol, rtol):
    """2 * integral_0^support f(lam) weight(lam) dlam, vector-valued weight."""
    total = 0.0
    for lo, hi in psd._seg:
        val, _ = adaptive_gauss_legendre(
            lambda x: psd.density(x)[:, None] * weight(x),
            lo, hi, order=_QUAD_ORDER, atol=atol, rtol=rtol)
        total = total + val
    return 2.0 * np.asarray(total)


def autocovariance(psd, v):
    """Autocovariance ``r(v) = integral f(lam) cos(v lam) dlam``.

    ``v`` may be a scalar or an array of lags; the return matches its shape.
    """
    v_arr = np.asarray(v, dtype=float)
    flat = np.atleast_1d(v_arr).ravel()
    if isinstance(psd, BandLimitedFlat):
        out = psd.P * _sinc(psd.W * flat)
    else:
        if not psd._seg:
            out = np.zeros_like(flat)
        else:
            scale = max(psd.values.max() * psd.support, 1e-300)
            out = _half_integral(
                psd, lambda x: np.cos(np.outer(x, flat)),
                atol=1e-15 * scale, rtol=1e-13)
    if not np.all(np.isfinite(out)):
        raise InvalidPSD("autocovariance quadrature did not converge")
    return float(out[0]) if v_arr.ndim == 0 else out.reshape(v_arr.shape)


def spectral_moment(psd):
    """Return ``(m0, m1) = (integral f, integral f |lam|)``."""
    if isinstance(psd, BandLimitedFlat):
        m0, m1 = float(psd.P), psd.P * psd.W / 2.0
    else:
        lam, f = psd.lam, psd.values
        h = np.diff(lam)
        fa, fb = f[:-1], f[1:]
        la, lb = lam[:-1], lam[1:]
        # exact integrals of a linear segment and of lam times it
        m0 = 2.0 * np.sum(h * (fa + fb) / 2.0)
        m1 = 2.0 * np.sum(h * (la * (2 * fa + fb) + lb * (fa + 2 * fb)) / 6.0)
    m0, m1 = float(m0), float(m1)
    if not (np.isfinite(m0) and np.isfinite(m1)):
        raise InvalidPSD("spectral moments are not finite")
    return m0, m1


def block_lags(psd, grid):
    """Distinct entries ``sigma_0 .. sigma_{n-1}`` of the block covariance."""
    n, delta = grid.n, grid.delta
    h = np.arange(n) * delta
    if isinstance(psd, BandLimitedFlat):
        if psd.W == 0 or psd.P == 0:
            return np.full(n, delta * psd.P)
        dens = psd.P / (2 * psd.W)
        scale = psd.P * delta

        def weight(x):
            return dens * np.cos(np.outer(x, h)) * _sinc(x * delta / 2)[:, None] ** 2

        val, _ = adaptive_gauss_legendre(weight, 0.0, psd.W, order=_QUAD_ORDER,
                                         atol=1e-14 * max(scale, 1e-300),
                                         rtol=1e-13)
        sig = 2.0 * delta * val
    else:
        if not psd._seg:
            return np.zeros(n)
        m0, _ = spectral_moment(psd)
        sig = delta * _half_integral(
            psd,
            lambda x: np.cos(np.outer(x, h)) * _sinc(x * delta / 2)[:, None] ** 2,
            atol=1e-14 * max(m0, 1e-300), rtol=1e-13)
    sig = np.asarray(sig, dtype=float)
    if not np.all(np.isfinite(sig)):
        raise InvalidPSD("block covariance quadrature did not converge")
    return sig


def block_covariance(psd, grid, check=True):
    """Covariance matrix of the normalized block integrals ``V_1..V_n``.

    Built from the ``n`` distinct lags (the matrix is symmetric Toeplitz).
    With ``check`` the matrix is verified positive semidefinite up to the
    largest jitter of the ladder; failure raises :class:`InvalidPSD`.
    """
    sig = block_lags(psd, grid)
    mat = toeplitz(sig)
    if check and sig[0] > 0:
        _factor_with_jitter(mat, sig[0])
    return mat


def kernel_matrix(psd, times):
    """Gram matrix ``r(t_i - t_j)`` on arbitrary times (via distinct lags)."""
    times = np.asarray(times, dtype=float)
    diffs = np.abs(times[:, None] - times[None, :])
    lags, inv = np.unique(diffs, return_inverse=True)
    vals = np.atleast_1d(autocovariance(psd, lags))
    return vals[inv].reshape(diffs.shape)


def _factor_with_jitter(mat, scale):
    """Symmetric square root ``S`` with ``S @ S.T == mat + jitter I``.

    Walks the jitter ladder (relative to ``scale``); fails if the smallest
    eigenvalue is still negative after the largest jitter.
    """
    n = mat.shape[0]
    w, vecs = np.linalg.eigh(mat)
    for jit in JITTER_LADDER:
        shifted = w + jit * scale
        if shifted.min() >= 0:
            return vecs * np.sqrt(shifted)
    raise InvalidPSD(
        f"kernel is not PSD at this resolution: min eigenvalue "
        f"{w.min():.3e} below -{JITTER_LADDER[-1] * scale:.1e} (n={n})")


def gp_sample(psd, fine_grid, rng, size=None):
    """Zero-mean stationary Gaussian path(s) with covariance ``r(t_i - t_j)``.

    Returns a :class:`PathRecord`, or an array of shape ``(size, N+1)`` when
    ``size`` is given.
    """
    times = fine_grid.times
    lags = np.atleast_1d(autocovariance(psd, times - times[0]))
    r0 = float(lags[0])
    npts = times.size
    shape = (npts,) if size is None else (int(size), npts)
    if r0 == 0:
        vals = np.zeros(shape)
    else:
        root = _factor_with_jitter(toeplitz(lags), r0)
        z = rng.standard_normal(shape)
        vals = z @ root.T
    if size is None:
        return PathRecord(fine_grid, vals)
    return vals
