"""Monte Carlo plumbing: estimates, stable reductions, deterministic chunked parallelism."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import logsumexp

# work is always split into chunks of this many realizations, whatever the pool size
CHUNK = 2048


@dataclass(frozen=True)
class MCEstimate:
    """Sample mean with standard error.

    With ``log_domain`` the mean is ``log`` of the sample mean and the
    standard error is that of the log (delta method).
    """

    mean: float
    stderr: float
    n: int
    seed: int
    log_domain: bool = False

    def to_dict(self):
        return asdict(self)


def default_threads():
    try:
        return max(1, int(os.environ.get("PAMLAB_THREADS", "1")))
    except ValueError:
        return 1


def mean_stderr(values):
    values = np.asarray(values, dtype=float)
    n = values.size
    if n < 2:
        return float(values.mean()), float("nan")
    return float(values.mean()), float(values.std(ddof=1) / np.sqrt(n))


def log_mean_stderr(log_values):
    """``log mean exp(l)`` and its delta-method standard error."""
    l = np.asarray(log_values, dtype=float)
    n = l.size
    if n == 0 or np.all(l == -np.inf):
        return -np.inf, float("nan")
    lm = float(logsumexp(l) - np.log(n))
    w = np.exp(l - lm)  # sample mean of w is 1
    se = float(w.std(ddof=1) / np.sqrt(n)) if n > 1 else float("nan")
    return lm, se


def chunked_map(fn, n_items, threads=None, chunk=CHUNK):
    """Apply ``fn(start, stop)`` over fixed index chunks and concatenate in index order."""
    threads = default_threads() if threads is None else max(1, int(threads))
    bounds = [(s, min(s + chunk, n_items)) for s in range(0, n_items, chunk)]
    if threads == 1 or len(bounds) <= 1:
        parts = [fn(a, b) for a, b in bounds]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(lambda ab: fn(*ab), bounds))
    if not parts:
        return np.empty(0)
    return np.concatenate(parts)
