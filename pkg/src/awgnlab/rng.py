"""Counter-based random streams and batch-means statistics.

Every Monte Carlo work unit draws from its own Philox stream, keyed by the
user seed and a stream id.  Results are therefore independent of how the
work units are scheduled across processes.
"""

import numpy as np

__all__ = ["stream", "stream_id", "batch_sizes", "batch_means_se"]

_MASK64 = (1 << 64) - 1

# stream-id namespaces so that different estimators never share draws
PURPOSE = {
    "feedback": 1,
    "novikov": 2,
    "supnorm": 3,
    "maxgauss": 4,
    "brownian": 5,
    "gp": 6,
    "check": 7,
}


def stream_id(purpose, index=0):
    """Compose a stream id from a purpose tag and a work-unit index."""
    tag = PURPOSE[purpose] if isinstance(purpose, str) else int(purpose)
    return (tag << 32) | int(index)


def stream(seed, sid=0):
    """Return a ``numpy.random.Generator`` on the Philox stream (seed, sid)."""
    key = (int(seed) & _MASK64) | ((int(sid) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def batch_sizes(trials, batches=100):
    """Split ``trials`` into at most ``batches`` nearly equal work units."""
    trials = int(trials)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    k = min(int(batches), trials)
    base, extra = divmod(trials, k)
    return [base + (1 if i < extra else 0) for i in range(k)]


def batch_means_se(sums, counts):
    """Grand mean and batch-means standard error.

    ``sums[i]`` is the sum of per-trial values in batch ``i`` and
    ``counts[i]`` its trial count.  With a single batch the standard error
    is reported as ``nan``.
    """
    sums = np.asarray(sums, dtype=float)
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    mean = sums.sum() / total
    k = len(counts)
    if k < 2:
        return float(mean), float("nan")
    bmeans = sums / counts
    # weighted batch variance; batches are (nearly) equal so weights ~ 1/k
    w = counts / total
    var_of_mean = np.sum(w ** 2 * (bmeans - mean) ** 2) * k / (k - 1)
    return float(mean), float(np.sqrt(var_of_mean))
