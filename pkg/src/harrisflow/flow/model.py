"""Flow configuration, trajectories and Monte Carlo path ensembles."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

__all__ = ["SCHEMES", "FlowConfig", "Trajectory", "PathEnsemble"]

SCHEMES = ("harris-sheet", "harris-cholesky", "arratia")


@dataclass(frozen=True)
class FlowConfig:
    """Discretization of an n-point motion on ``[0, horizon]``.

    ``start_points`` must be non-decreasing; equal entries start merged.
    ``time_step`` defaults to ``1e-3 * horizon``. ``sheet_space_step`` of None
    means ``eps R / 8`` for the kernel in use. Paths and diagnostics are
    recorded every ``record_stride`` steps.
    """

    start_points: tuple
    horizon: float
    time_step: float | None = None
    scheme: str = "arratia"
    sheet_space_step: float | None = None
    bridge_refinement: bool = True
    record_stride: int = 1

    def __post_init__(self):
        pts = tuple(float(u) for u in self.start_points)
        object.__setattr__(self, "start_points", pts)
        if not pts:
            raise ValueError("start_points must not be empty")
        if not all(math.isfinite(u) for u in pts):
            raise ValueError("start_points must be finite")
        if any(b < a for a, b in zip(pts, pts[1:])):
            raise ValueError("start_points must be non-decreasing")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive, got {self.horizon!r}")
        if self.time_step is None:
            object.__setattr__(self, "time_step", 1e-3 * self.horizon)
        if not self.time_step > 0:
            raise ValueError(f"time_step must be positive, got {self.time_step!r}")
        steps = round(self.horizon / self.time_step)
        if steps < 1 or abs(steps * self.time_step - self.horizon) > math.ulp(self.horizon):
            raise ValueError(
                f"time_step {self.time_step!r} does not divide horizon {self.horizon!r} into an integer number of steps"
            )
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if self.sheet_space_step is not None and not self.sheet_space_step > 0:
            raise ValueError("sheet_space_step must be positive")
        if int(self.record_stride) != self.record_stride or self.record_stride < 1:
            raise ValueError("record_stride must be a positive integer")
        if steps % self.record_stride:
            raise ValueError(f"record_stride {self.record_stride} does not divide the {steps} steps")

    @property
    def n(self):
        return len(self.start_points)

    @property
    def n_steps(self):
        return round(self.horizon / self.time_step)

    @property
    def times(self):
        """Recorded time grid, from 0 to ``horizon`` inclusive."""
        k = np.arange(0, self.n_steps + 1, self.record_stride)
        t = k * self.time_step
        t[-1] = self.horizon
        return t

    def with_scheme(self, scheme):
        return FlowConfig(
            self.start_points, self.horizon, self.time_step, scheme,
            self.sheet_space_step, self.bridge_refinement, self.record_stride,
        )


@dataclass(frozen=True)
class Trajectory:
    """One n-point trajectory: ``values[t_index, particle]`` on ``times``."""

    times: np.ndarray
    values: np.ndarray


@dataclass(frozen=True)
class PathEnsemble:
    """Monte Carlo replicas of an n-point motion.

    Attributes
    ----------
    flavor : str
        The scheme that produced the ensemble.
    paths : ndarray, shape (replicas, len(times), n)
        Ordered positions at the recorded times.
    covariation : ndarray, shape (replicas, len(times), n_pairs)
        Running sums of increment products at full time resolution, per pair
        in :attr:`pairs` order.
    gamma_integral : ndarray or None
        Running left-point sums of ``Gamma_eps(gap) dt`` (Harris flavors).
    coalescence_step : ndarray, shape (replicas, n_pairs)
        First step index at which the pair coincides, -1 if never.
    crossing_count : int
        Adjacent order violations repaired by sorting (Harris flavors).
    seed_record : dict
        Master seed, stream group and replica count.
    """

    flavor: str
    start_points: tuple
    times: np.ndarray
    time_step: float
    paths: np.ndarray
    covariation: np.ndarray
    gamma_integral: np.ndarray | None
    coalescence_step: np.ndarray
    crossing_count: int = 0
    seed_record: dict = field(default_factory=dict)

    @property
    def n(self):
        return len(self.start_points)

    @property
    def replicas(self):
        return self.paths.shape[0]

    @property
    def n_steps(self):
        return round(self.times[-1] / self.time_step)

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def pairs(self):
        return list(combinations(range(self.n), 2))

    def pair_index(self, i, j):
        i, j = sorted((i, j))
        if i == j or not 0 <= i < j < self.n:
            raise IndexError(f"invalid particle pair ({i}, {j}) for n={self.n}")
        return self.pairs.index((i, j))

    def time_index(self, t):
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not on the recorded grid")
        return idx

    def at(self, t):
        """Positions at recorded time ``t``, shape ``(replicas, n)``."""
        return self.paths[:, self.time_index(t), :]

    def final(self):
        return self.paths[:, -1, :]

    def trajectory(self, replica):
        return Trajectory(self.times, self.paths[replica])

    def coalesced_by(self, t=None, pair=(0, 1)):
        """Boolean per replica: has ``pair`` coincided by time ``t`` (default horizon)."""
        steps = self.n_steps if t is None else round(t / self.time_step)
        s = self.coalescence_step[:, self.pair_index(*pair)]
        return (s >= 0) & (s <= steps)

    @property
    def crossing_rate(self):
        denom = self.n_steps * max(self.n - 1, 1) * max(self.replicas, 1)
        return self.crossing_count / denom

    def write_csv(self, path):
        """Dump ``(replica, t, x_1, ..., x_n)`` rows."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replica", "t"] + [f"x_{i + 1}" for i in range(self.n)])
            for r in range(self.replicas):
                for t, row in zip(self.times, self.paths[r]):
                    w.writerow([r, repr(float(t))] + [repr(float(v)) for v in row])
