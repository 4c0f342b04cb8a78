"""Brownian motion, the AWGN channel with and without feedback, and sampling.

Paths live on an evenly spaced fine grid and are read as piecewise linear
between grid times.  Feedback drifts are functionals of the path so far:
they are called as ``drift(t, m, times, values)`` where ``values`` holds a
batch of path prefixes (shape ``(batch, k+1)``) on ``times[:k+1]``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

__all__ = [
    "SampleGrid",
    "PathRecord",
    "Drift",
    "MessageScaled",
    "LinearFeedback",
    "CustomDrift",
    "GridMismatch",
    "check_conditions",
    "brownian",
    "transmit_nonfeedback",
    "transmit_feedback",
    "euler_maruyama",
    "integrate_and_dump",
    "normalize_increments",
    "dump_path",
]


class GridMismatch(ValueError):
    """Raised when paths or grids are not compatible."""


@dataclass(frozen=True)
class SampleGrid:
    """Evenly spaced times ``t_i = i T / n``, ``i = 0..n``."""

    T: float
    n: int

    def __post_init__(self):
        if not (np.isfinite(self.T) and self.T > 0):
            raise ValueError(f"horizon T must be positive, got {self.T}")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def delta(self):
        return self.T / self.n

    @property
    def times(self):
        # i/n is exact-ratio rounded, so nested grids share bit-identical times
        return np.arange(self.n + 1) / self.n * self.T

    def nests_in(self, fine):
        """True if every time of this grid is a time of ``fine``."""
        return self.T == fine.T and fine.n % self.n == 0


@dataclass
class PathRecord:
    """A path stored at grid times, linear in between."""

    grid: SampleGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n + 1,):
            raise GridMismatch(
                f"expected {self.grid.n + 1} values, got {self.values.shape}")

    @property
    def times(self):
        return self.grid.times

    def at(self, t):
        return np.interp(t, self.times, self.values)

    def sup_norm(self):
        return float(np.max(np.abs(self.values)))


def _uniform_prior(k):
    return tuple([1.0 / k] * k)


@dataclass(frozen=True, kw_only=True)
class Drift:
    """Base class for feedback drifts ``g(s, m, y_0^s)``.

    ``messages`` is the finite alphabet and ``prior`` its probabilities
    (uniform when omitted).  Subclasses declare the Lipschitz constant
    ``L_lip`` and growth constant ``L_growth`` of the regularity conditions.
    """

    messages: Tuple[float, ...] = (-1.0, 1.0)
    prior: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        msgs = tuple(float(m) for m in self.messages)
        if len(msgs) < 1:
            raise ValueError("message alphabet is empty")
        prior = (_uniform_prior(len(msgs)) if self.prior is None
                 else tuple(float(p) for p in self.prior))
        if len(prior) != len(msgs):
            raise ValueError("prior and messages differ in length")
        if min(prior) <= 0 or abs(sum(prior) - 1.0) > 1e-12:
            raise ValueError("prior probabilities must be positive and sum to 1")
        object.__setattr__(self, "messages", msgs)
        object.__setattr__(self, "prior", prior)

    @property
    def message_array(self):
        return np.asarray(self.messages)

    @property
    def prior_array(self):
        return np.asarray(self.prior)

    @property
    def entropy(self):
        """Entropy of the message prior in nats."""
        p = self.prior_array
        return float(-np.sum(p * np.log(p)))

    @property
    def L_lip(self):
        raise NotImplementedError

    @property
    def L_growth(self):
        raise NotImplementedError

    def __call__(self, t, m, times, values):
        raise NotImplementedError

    def along_path(self, m, times, values):
        """Drift at every left endpoint: ``out[:, k] = g(t_k, m, y_0^{t_k})``.

        ``values`` has shape ``(batch, K+1)``; the result has ``(batch, K)``.
        """
        values = np.atleast_2d(values)
        cols = [self(times[k], m, times[:k + 1], values[:, :k + 1])
                for k in range(values.shape[1] - 1)]
        if not cols:
            return np.zeros((values.shape[0], 0))
        return np.stack(cols, axis=1)


@dataclass(frozen=True, kw_only=True)
class MessageScaled(Drift):
    """``g = theta * m * pulse(s)``; no feedback.

    ``pulse`` is a vectorized function of time (constant 1 when omitted);
    ``pulse_lip`` and ``pulse_sup`` are its declared Lipschitz constant and
    sup norm.
    """

    theta: float = 1.0
    pulse: Optional[Callable] = None
    pulse_lip: float = 0.0
    pulse_sup: float = 1.0

    def _pulse(self, t):
        t = np.asarray(t, dtype=float)
        return np.ones_like(t) if self.pulse is None else np.asarray(self.pulse(t), dtype=float)

    @property
    def L_lip(self):
        return abs(self.theta) * np.max(np.abs(self.messages)) * self.pulse_lip

    @property
    def L_growth(self):
        return abs(self.theta) * np.max(np.abs(self.messages)) * self.pulse_sup

    def __call__(self, t, m, times, values):
        batch = np.shape(values)[0]
        return np.broadcast_to(self.theta * np.asarray(m, dtype=float) * self._pulse(t),
                               (batch,)).astype(float)

    def along_path(self, m, times, values):
        values = np.atleast_2d(values)
        m = np.broadcast_to(np.asarray(m, dtype=float), (values.shape[0],))
        return self.theta * m[:, None] * self._pulse(times[:-1])[None, :]


@dataclass(frozen=True, kw_only=True)
class LinearFeedback(Drift):
    """``g = theta * m - kappa * y(s)``: message plus linear output feedback."""

    theta: float = 1.0
    kappa: float = 1.0

    @property
    def L_lip(self):
        return abs(self.kappa)

    @property
    def L_growth(self):
        return max(abs(self.theta) * np.max(np.abs(self.messages)), abs(self.kappa))

    def __call__(self, t, m, times, values):
        values = np.atleast_2d(values)
        return self.theta * np.asarray(m, dtype=float) - self.kappa * values[:, -1]

    def along_path(self, m, times, values):
        values = np.atleast_2d(values)
        m = np.broadcast_to(np.asarray(m, dtype=float), (values.shape[0],))
        return self.theta * m[:, None] - self.kappa * values[:, :-1]


@dataclass(frozen=True, kw_only=True)
class CustomDrift(Drift):
    """User drift ``func(t, m, times, values) -> (batch,)`` with declared constants."""

    func: Callable = field(default=None)
    lip: float = 0.0
    growth: float = 0.0

    def __post_init__(self):
        super().__post_init__()
        if self.func is None:
            raise ValueError("CustomDrift needs a callable")

    @property
    def L_lip(self):
        return self.lip

    @property
    def L_growth(self):
        return self.growth

    def __call__(self, t, m, times, values):
        values = np.atleast_2d(values)
        out = np.asarray(self.func(t, m, times, values), dtype=float)
        return np.broadcast_to(out, (values.shape[0],))


def _stopped_sup(y, ky, z, kz):
    """Sup distance between ``y`` stopped at index ky and ``z`` stopped at kz."""
    k = max(ky, kz)
    ys = np.concatenate([y[:ky + 1], np.full(k - ky, y[ky])])
    zs = np.concatenate([z[:kz + 1], np.full(k - kz, z[kz])])
    return float(np.max(np.abs(ys - zs)))


def check_conditions(drift, grid, rng, pairs=64, rtol=1e-9):
    """Spot-check the declared Lipschitz and linear-growth constants.

    Draws random Brownian-like path pairs and random stopping times and
    counts violations of

        |g(s, m, y_0^s) - g(t, m, z_0^t)| <= L_lip (|s - t| + ||y_0^s - z_0^t||)
        |g(t, m, y_0^t)| <= L_growth (1 + ||y_0^t||).

    Returns a dict with ``checked``, ``lip_violations`` and
    ``growth_violations``.
    """
    times = grid.times
    lip_bad = growth_bad = 0
    for _ in range(int(pairs)):
        scale = rng.uniform(0.1, 3.0, size=2)
        y = np.concatenate([[0.0], np.cumsum(rng.standard_normal(grid.n))]) * np.sqrt(grid.delta) * scale[0]
        z = y + np.concatenate([[0.0], np.cumsum(rng.standard_normal(grid.n))]) * np.sqrt(grid.delta) * scale[1]
        ky, kz = rng.integers(0, grid.n + 1, size=2)
        m = float(rng.choice(drift.messages))
        gy = float(drift(times[ky], m, times[:ky + 1], y[None, :ky + 1])[0])
        gz = float(drift(times[kz], m, times[:kz + 1], z[None, :kz + 1])[0])
        lhs = abs(gy - gz)
        rhs = drift.L_lip * (abs(times[ky] - times[kz]) + _stopped_sup(y, ky, z, kz))
        if lhs > rhs * (1 + rtol) + 1e-12:
            lip_bad += 1
        if abs(gy) > drift.L_growth * (1 + np.max(np.abs(y[:ky + 1]))) * (1 + rtol) + 1e-12:
            growth_bad += 1
    return {"checked": int(pairs), "lip_violations": lip_bad,
            "growth_violations": growth_bad}


def brownian(fine_grid, rng, size=None):
    """Standard Brownian motion on ``fine_grid`` started at 0.

    Returns a :class:`PathRecord`, or an array ``(size, N+1)`` of paths.
    """
    shape = (fine_grid.n,) if size is None else (int(size), fine_grid.n)
    inc = rng.standard_normal(shape) * np.sqrt(fine_grid.delta)
    vals = np.zeros(shape[:-1] + (fine_grid.n + 1,))
    np.cumsum(inc, axis=-1, out=vals[..., 1:])
    return PathRecord(fine_grid, vals) if size is None else vals


def transmit_nonfeedback(x, b):
    """``Y(t) = integral_0^t x(s) ds + b(t)`` with the trapezoid rule."""
    if x.grid != b.grid:
        raise GridMismatch("input and noise paths must share a grid")
    integ = cumulative_trapezoid(x.values, dx=x.grid.delta, initial=0.0)
    return PathRecord(x.grid, integ + b.values)


def euler_maruyama(drift, m, times, dB):
    """Batched Euler-Maruyama for ``dY = g(s, m, Y_0^s) ds + dB``, ``Y(0) = 0``.

    ``dB`` has shape ``(batch, N)``; ``m`` is a scalar or ``(batch,)``.
    The drift for step ``k`` sees only ``Y(t_0..t_k)``.
    """
    dB = np.atleast_2d(dB)
    batch, nsteps = dB.shape
    step = (times[-1] - times[0]) / nsteps
    m = np.broadcast_to(np.asarray(m, dtype=float), (batch,))
    y = np.zeros((batch, nsteps + 1))
    for k in range(nsteps):
        g = drift(times[k], m, times[:k + 1], y[:, :k + 1])
        y[:, k + 1] = y[:, k] + g * step + dB[:, k]
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("drift produced a non-finite value")
    return y


def transmit_feedback(drift, m, fine_grid, rng=None, b=None):
    """Simulate the feedback channel for message ``m``.

    Exactly one of ``rng`` (fresh Brownian motion) or ``b`` (given noise
    path) must be supplied.  Returns ``(y, b)`` as :class:`PathRecord`.
    """
    if (rng is None) == (b is None):
        raise ValueError("pass exactly one of rng or b")
    if b is None:
        b = brownian(fine_grid, rng)
    elif b.grid != fine_grid:
        raise GridMismatch("noise path is not on the fine grid")
    y = euler_maruyama(drift, m, fine_grid.times, np.diff(b.values)[None, :])[0]
    return PathRecord(fine_grid, y), b


def integrate_and_dump(y, coarse):
    """Samples ``Y(t_0), ..., Y(t_n)`` of a fine path at the coarse times.

    ``y`` may be a :class:`PathRecord` or a batch array ``(batch, N+1)``
    (then ``coarse`` must nest in a grid with ``N`` intervals and the same
    horizon, which the caller guarantees).
    """
    if isinstance(y, PathRecord):
        if not coarse.nests_in(y.grid):
            raise GridMismatch(
                f"coarse n={coarse.n}, T={coarse.T} does not nest in fine "
                f"N={y.grid.n}, T={y.grid.T}")
        return y.values[:: y.grid.n // coarse.n].copy()
    y = np.asarray(y)
    nfine = y.shape[-1] - 1
    if nfine % coarse.n:
        raise GridMismatch(f"coarse n={coarse.n} does not divide N={nfine}")
    return y[..., :: nfine // coarse.n]


def normalize_increments(samples, delta):
    """``(Y(t_i) - Y(t_{i-1})) / sqrt(delta)``."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    return np.diff(np.asarray(samples, dtype=float), axis=-1) / np.sqrt(delta)


def dump_path(path, file, seed, sid):
    """Write ``(t, Y(t))`` rows as CSV with the seed and stream id in the header."""
    rows = np.column_stack([path.times, path.values])
    header = f"seed={int(seed)} stream_id={int(sid)}\nt,value"
    np.savetxt(file, rows, delimiter=",", header=header, fmt="%.17g")
