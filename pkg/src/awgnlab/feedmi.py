"""Likelihood-ratio mutual information for the feedback channel.

For a path ``y`` and message ``m`` the Girsanov exponent is

    rho(m, y) = -sum_k g(t_k, m, y_0^{t_k}) (y_{k+1} - y_k)
                + 1/2 sum_k g(t_k, m, y_0^{t_k})**2 dt,

so ``exp(-rho)`` is the density of the output law given ``m`` against
Wiener measure.  On the fine simulation grid this is ``rho1``; on the
piecewise-linear interpolation of coarse samples with a drift frozen over
each coarse interval it is ``rho2``, which depends on the samples only.

The per-trial information density is

    -rho(M, Y) - log sum_m p(m) exp(-rho(m, Y)),

whose average estimates ``I(M; Y)``.  One Brownian path and one message per
trial drive every grid (common random numbers).
"""

import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .gaussmi import Method, MIEstimate
from .rng import batch_means_se, batch_sizes, stream, stream_id
from .simulate import SampleGrid, euler_maruyama, integrate_and_dump

__all__ = [
    "CLIP",
    "rho1",
    "rho2",
    "girsanov_exponent",
    "posterior_weights",
    "posterior_drift",
    "FeedbackRun",
    "feedback_mi_run",
    "mi_feedback_sampled",
    "mi_feedback_continuous",
    "novikov_check",
    "sup_norm_moment_check",
]

CLIP = 700.0
DEFAULT_BATCHES = 100
KURTOSIS_WARN = 1e4


def girsanov_exponent(drift, m, times, values):
    """Left-endpoint Girsanov exponent on a grid; batched over rows of ``values``."""
    values = np.atleast_2d(values)
    step = (times[-1] - times[0]) / (values.shape[1] - 1)
    g = drift.along_path(m, times, values)
    if not np.all(np.isfinite(g)):
        raise FloatingPointError("drift produced a non-finite value")
    dy = np.diff(values, axis=1)
    return -np.sum(g * dy, axis=1) + 0.5 * np.sum(g * g, axis=1) * step


def rho1(drift, m, y):
    """Girsanov exponent of a fine-grid :class:`PathRecord`."""
    return float(girsanov_exponent(drift, m, y.grid.times, y.values)[0])


def rho2(drift, m, samples, coarse):
    """Girsanov exponent with drift frozen on the coarse intervals.

    ``samples`` are ``Y(t_0..t_n)``; the drift at ``t_{i-1}`` is evaluated
    on the linear interpolation of the samples up to ``t_{i-1}``.  The
    result is a function of the samples alone.
    """
    samples = np.asarray(samples, dtype=float)
    out = girsanov_exponent(drift, m, coarse.times, samples)
    return float(out[0]) if samples.ndim == 1 else out


def _log_info_density(neg_rho, log_prior, true_idx):
    """Per-trial ``-rho(M) - logsumexp(log p - rho)`` with clipping.

    ``neg_rho`` has shape ``(batch, n_messages)``.  Returns the densities
    and the number of clipped exponents.
    """
    clipped = np.clip(neg_rho, -CLIP, CLIP)
    n_clip = int(np.count_nonzero(clipped != neg_rho))
    mix = logsumexp(clipped + log_prior[None, :], axis=1)
    own = clipped[np.arange(clipped.shape[0]), true_idx]
    return own - mix, n_clip


def posterior_weights(drift, y, s):
    """Posterior message probabilities given the path up to grid time ``s``."""
    times = y.grid.times
    k = int(np.searchsorted(times, s - 1e-12 * max(1.0, abs(s))))
    if k > y.grid.n or abs(times[k] - s) > 1e-9 * max(1.0, y.grid.T):
        raise ValueError(f"s={s} is not a grid time")
    logw = np.log(drift.prior_array)
    if k > 0:
        prefix = y.values[None, : k + 1]
        for j, m in enumerate(drift.messages):
            logw[j] -= girsanov_exponent(drift, m, times[: k + 1], prefix)[0]
    return np.exp(logw - logsumexp(logw)), k


def posterior_drift(drift, y, s):
    """``E[g(s, M, y_0^s) | y_0^s]`` under the message prior."""
    w, k = posterior_weights(drift, y, s)
    times = y.grid.times[: k + 1]
    prefix = y.values[None, : k + 1]
    g = np.array([drift(times[-1], m, times, prefix)[0] for m in drift.messages])
    return float(np.dot(w, g))


def _simulate_batch(drift, fine, seed, batch, size):
    rng = stream(seed, stream_id("feedback", batch))
    idx = rng.choice(len(drift.messages), size=size, p=drift.prior_array)
    dB = rng.standard_normal((size, fine.n)) * math.sqrt(fine.delta)
    m = drift.message_array[idx]
    y = euler_maruyama(drift, m, fine.times, dB)
    return idx, y


def _batch_terms(args):
    """Per-trial information densities for one batch on every grid.

    Returns ``(terms, clips)`` where ``terms[:, 0]`` is the fine grid and
    ``terms[:, j+1]`` the ``j``-th coarse grid.
    """
    drift, fine, coarse_list, seed, batch, size = args
    idx, y = _simulate_batch(drift, fine, seed, batch, size)
    log_prior = np.log(drift.prior_array)
    grids = [fine] + list(coarse_list)
    terms = np.empty((size, len(grids)))
    clips = np.zeros(len(grids), dtype=int)
    for j, grid in enumerate(grids):
        samples = y if grid.n == fine.n else integrate_and_dump(y, grid)
        neg_rho = np.stack(
            [-girsanov_exponent(drift, m, grid.times, samples)
             for m in drift.messages], axis=1)
        terms[:, j], clips[j] = _log_info_density(neg_rho, log_prior, idx)
    return terms, clips


@dataclass
class FeedbackRun:
    """Batched per-grid sums from one CRN-coupled feedback simulation."""

    fine: SampleGrid
    coarse: list
    trials: int
    sums: np.ndarray          # (batches, 1 + n_coarse)
    gap_sums: np.ndarray      # (batches, n_coarse): fine minus coarse
    counts: np.ndarray
    clips: np.ndarray         # (1 + n_coarse,)
    per_trial: np.ndarray = field(default=None, repr=False)

    def continuous(self):
        mean, se = batch_means_se(self.sums[:, 0], self.counts)
        return MIEstimate(mean, Method.MONTE_CARLO, self.trials, se)

    def sampled(self, j):
        mean, se = batch_means_se(self.sums[:, j + 1], self.counts)
        return MIEstimate(mean, Method.MONTE_CARLO, self.trials, se)

    def gap(self, j):
        return batch_means_se(self.gap_sums[:, j], self.counts)


def feedback_mi_run(drift, fine, coarse_list, trials, seed, workers=1,
                    batches=DEFAULT_BATCHES, keep_trials=False):
    """Simulate ``trials`` CRN-coupled paths and score every grid.

    Each of the (at most ``batches``) work units uses its own counter-based
    stream, so results depend only on ``seed`` and the partition, never on
    ``workers``.
    """
    for g in coarse_list:
        if not g.nests_in(fine):
            raise ValueError(f"grid n={g.n} does not nest in fine N={fine.n}")
    sizes = batch_sizes(trials, batches)
    jobs = [(drift, fine, tuple(coarse_list), seed, b, s)
            for b, s in enumerate(sizes)]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=min(workers, os.cpu_count() or 1)) as ex:
            results = list(ex.map(_batch_terms, jobs))
    else:
        results = [_batch_terms(job) for job in jobs]
    sums = np.array([t.sum(axis=0) for t, _ in results])
    gap_sums = np.array([(t[:, :1] - t[:, 1:]).sum(axis=0) for t, _ in results])
    clips = np.sum([c for _, c in results], axis=0)
    per_trial = np.concatenate([t for t, _ in results]) if keep_trials else None
    return FeedbackRun(fine, list(coarse_list), int(trials), sums,
                       gap_sums.reshape(len(sizes), len(coarse_list)),
                       np.asarray(sizes, dtype=float), clips, per_trial)


def _default_fine(coarse, min_n=2048):
    k = max(0, math.ceil(math.log2(min_n / coarse.n)))
    return SampleGrid(coarse.T, coarse.n * 2 ** k)


def mi_feedback_sampled(drift, coarse, trials, seed, fine=None, workers=1):
    """Estimate ``I(M; Y(t_0..t_n))`` through the frozen-drift exponent.

    Paths are simulated on ``fine`` (default: the smallest dyadic refinement
    of ``coarse`` with at least 2048 intervals).
    """
    fine = _default_fine(coarse) if fine is None else fine
    if coarse.n == fine.n:
        run = feedback_mi_run(drift, fine, [], trials, seed, workers)
        return run.continuous()
    return feedback_mi_run(drift, fine, [coarse], trials, seed, workers).sampled(0)


def mi_feedback_continuous(drift, fine, trials, seed, workers=1):
    """Estimate ``I(M; Y_0^T)`` with the fine-grid exponent."""
    return feedback_mi_run(drift, fine, [], trials, seed, workers).continuous()


def _drift_is_zero(drift):
    theta = getattr(drift, "theta", None)
    kappa = getattr(drift, "kappa", 0.0)
    return theta == 0 and kappa == 0


def novikov_check(drift, fine, trials, seed, batches=DEFAULT_BATCHES):
    """Monte Carlo ``E[exp(-int g dB - 1/2 int g^2 ds)]`` and its standard error.

    The expectation is 1; a large sample kurtosis of the weights triggers a
    heavy-tail warning.
    """
    if _drift_is_zero(drift):
        return 1.0, 0.0
    sizes = batch_sizes(trials, batches)
    sums, vals_all = [], []
    for b, size in enumerate(sizes):
        rng = stream(seed, stream_id("novikov", b))
        idx = rng.choice(len(drift.messages), size=size, p=drift.prior_array)
        dB = rng.standard_normal((size, fine.n)) * math.sqrt(fine.delta)
        m = drift.message_array[idx]
        y = euler_maruyama(drift, m, fine.times, dB)
        g = drift.along_path(m, fine.times, y)
        expo = -np.sum(g * dB, axis=1) - 0.5 * np.sum(g * g, axis=1) * fine.delta
        w = np.exp(np.clip(expo, -CLIP, CLIP))
        sums.append(w.sum())
        vals_all.append(w)
    mean, se = batch_means_se(sums, sizes)
    w = np.concatenate(vals_all)
    sd = w.std()
    if sd > 0:
        kurt = float(np.mean((w - w.mean()) ** 4) / sd ** 4)
        if kurt > KURTOSIS_WARN:
            warnings.warn(f"novikov_check: heavy-tailed weights (kurtosis {kurt:.3g})")
    return mean, se


def sup_norm_moment_check(drift, fine, eps=0.01, trials=10_000, seed=0,
                          batches=DEFAULT_BATCHES):
    """Monte Carlo ``E[exp(eps * sup_t |Y(t)|^2)]`` with standard error.

    Raises ``OverflowError`` when the exponent leaves double range.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    sizes = batch_sizes(trials, batches)
    sums = []
    for b, size in enumerate(sizes):
        rng = stream(seed, stream_id("supnorm", b))
        idx = rng.choice(len(drift.messages), size=size, p=drift.prior_array)
        dB = rng.standard_normal((size, fine.n)) * math.sqrt(fine.delta)
        if _drift_is_zero(drift):
            y = np.cumsum(dB, axis=1)
        else:
            y = euler_maruyama(drift, drift.message_array[idx], fine.times, dB)
        expo = eps * np.max(np.abs(y), axis=1) ** 2
        if np.any(expo > CLIP):
            raise OverflowError("eps too large for this horizon")
        sums.append(np.exp(expo).sum())
    return batch_means_se(sums, sizes)
