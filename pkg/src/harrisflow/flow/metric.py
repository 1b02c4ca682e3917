"""The locally uniform metric on C([0, inf), R^n), truncated to a finite grid."""
from __future__ import annotations

import math

import numpy as np

__all__ = ["path_metric"]


def path_metric(f, g, terms=20):
    """``sum_i sum_k 2^-k m_ik / (1 + m_ik)`` with ``m_ik = max_{t <= k} |f_i - g_i|``.

    The ``k`` sum runs to ``min(terms, ceil(T))`` for trajectories observed on
    ``[0, T]``.

    Parameters
    ----------
    f, g : Trajectory
        Trajectories on the same time grid.
    terms : int
        Truncation of the ``k`` sum.
    """
    if f.times.shape != g.times.shape or not np.array_equal(f.times, g.times):
        raise ValueError("trajectories are on different time grids")
    if f.values.shape != g.values.shape:
        raise ValueError(f"shape mismatch {f.values.shape} vs {g.values.shape}")
    diff = np.abs(np.asarray(f.values, dtype=float) - np.asarray(g.values, dtype=float))
    if diff.ndim == 1:
        diff = diff[:, None]
    horizon = float(f.times[-1])
    kmax = min(int(terms), max(1, math.ceil(horizon - 1e-12)))
    total = 0.0
    for k in range(1, kmax + 1):
        m = diff[f.times <= k + 1e-12].max(axis=0)
        total += math.fsum(m / (1.0 + m)) * 2.0**-k
    return total
