"""Distribution distances and path diagnostics that compare ensembles.

The convergence study reduces each ensemble to finite-dimensional
marginals at probe times and compares them with an Arratia reference
simulated under the same flow configuration.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .flow import SimulationError, simulate
from .flow.rng import NULL_GROUP

__all__ = [
    "MAX_EXACT",
    "REPORT_COLUMNS",
    "energy_distance",
    "ks_statistic",
    "near_coalescence_prob",
    "realized_covariation",
    "Covariation",
    "ReportRow",
    "ConvergenceReport",
    "build_report",
    "probe_vectors",
]

MAX_EXACT = 20_000
_CHUNK = 2048

REPORT_COLUMNS = (
    "epsilon",
    "energy_distance",
    "ks_max",
    "near_coalescence_prob",
    "mc_stderr",
    "crossing_rate",
    "status",
)


def _mean_pairwise(a, b):
    total = 0.0
    for i in range(0, a.shape[0], _CHUNK):
        total += cdist(a[i : i + _CHUNK], b).sum()
    return total / (a.shape[0] * b.shape[0])


def _subsample(x, size, seed):
    idx = np.random.default_rng(seed).choice(x.shape[0], size=size, replace=False)
    return x[np.sort(idx)]


def energy_distance(sample_a, sample_b, max_exact=MAX_EXACT, seed=0):
    """Energy distance ``2 E|A - B| - E|A - A'| - E|B - B'|`` between samples.

    Computed as the V-statistic over all ordered pairs (diagonal zeros
    included), i.e. the exact energy distance between the two empirical
    measures. It is therefore non-negative and exactly 0 for identical point
    sets; under equal laws its expectation is ``(E|A - A'|)(1/m_a + 1/m_b)``,
    which is the bias to allow for when it is used as a test statistic.

    Samples larger than ``max_exact`` are replaced by a uniform subsample of
    ``max_exact`` points drawn without replacement with ``seed``.

    Parameters
    ----------
    sample_a, sample_b : array_like, shape (m, d) or (m,)
    """
    a = np.asarray(sample_a, dtype=float)
    b = np.asarray(sample_b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("samples must be non-empty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    if a.shape[0] > max_exact:
        a = _subsample(a, max_exact, seed)
    if b.shape[0] > max_exact:
        b = _subsample(b, max_exact, seed + 1)
    value = 2.0 * _mean_pairwise(a, b) - _mean_pairwise(a, a) - _mean_pairwise(b, b)
    return max(value, 0.0)


def ks_statistic(sample_a, sample_b):
    """Two-sample Kolmogorov-Smirnov statistic ``sup |F_a - F_b|``."""
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("samples must be non-empty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def near_coalescence_prob(ensemble, eta):
    """Fraction of replicas whose smallest adjacent gap at the horizon is below ``eta``.

    Returns
    -------
    (p, stderr) : tuple of float
        The fraction and its binomial standard error.
    """
    if ensemble.n < 2:
        raise ValueError("near-coalescence needs at least two particles")
    if not eta > 0:
        raise ValueError("eta must be positive")
    m = ensemble.replicas
    if m == 0:
        return math.nan, math.nan
    x = ensemble.final()
    hit = np.min(np.diff(x, axis=1), axis=1) < eta
    p = float(hit.mean())
    return p, math.sqrt(p * (1.0 - p) / m)


@dataclass(frozen=True)
class Covariation:
    """Per-replica running covariation of a pair and its time change.

    ``values[r, t]`` is the realized covariation on the recorded grid and
    ``tau = 2 t - 2 values`` the estimated quadratic variation of the gap.
    """

    times: np.ndarray
    values: np.ndarray

    @property
    def tau(self):
        return 2.0 * self.times - 2.0 * self.values

    def at_horizon(self):
        return self.values[:, -1]


def realized_covariation(ensemble, pair):
    i, j = pair
    if i == j:
        raise ValueError("pair needs two distinct particles")
    k = ensemble.pair_index(i, j)
    return Covariation(ensemble.times, ensemble.covariation[:, :, k])


def probe_vectors(ensemble, probe_times):
    """Stack ``(x(t_1), ..., x(t_m))`` into one ``n m``-vector per replica."""
    return np.concatenate([ensemble.at(t) for t in probe_times], axis=1)


@dataclass(frozen=True)
class ReportRow:
    epsilon: float
    energy_distance: float
    ks_max: float
    near_coalescence_prob: float
    mc_stderr: float
    crossing_rate: float
    status: str = "ok"

    @property
    def ok(self):
        return self.status in ("ok", "null", "reference")


def _fmt(v):
    if isinstance(v, str):
        return v
    return repr(float(v))


@dataclass(frozen=True)
class ConvergenceReport:
    """Per-epsilon distances from Harris ensembles to the Arratia reference.

    ``rows`` follows ``epsilon_list``; ``reference`` (epsilon 0) and ``null``
    (epsilon inf, a second Arratia ensemble with independent streams) describe
    the limit object and the Monte Carlo noise floor.
    """

    epsilon_list: tuple
    rows: tuple
    reference: ReportRow
    null: ReportRow
    probe_times: tuple
    eta: float
    replicas: int
    master_seed: int
    common_random_numbers: bool = True
    meta: dict = field(default_factory=dict)

    def row(self, epsilon):
        for r in self.rows:
            if r.epsilon == epsilon:
                return r
        raise KeyError(epsilon)

    @property
    def noise_floor(self):
        return self.null.energy_distance

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in (*self.rows, self.reference, self.null):
            w.writerow([_fmt(getattr(r, c)) for c in REPORT_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())


def _compare(ens, ref, probe_times, eta, epsilon, status):
    va = probe_vectors(ens, probe_times)
    vb = probe_vectors(ref, probe_times)
    ed = energy_distance(va, vb)
    ks = max(ks_statistic(va[:, c], vb[:, c]) for c in range(va.shape[1]))
    p, se = near_coalescence_prob(ens, eta)
    return ReportRow(epsilon, ed, ks, p, se, ens.crossing_rate, status)


def _failed(epsilon, exc):
    msg = " ".join(str(exc).split()).replace(",", ";")
    nan = math.nan
    return ReportRow(epsilon, nan, nan, nan, nan, nan, f"failed: {type(exc).__name__}: {msg}")


def build_report(kernels, cfg, replicas, seed, eta=None, probe_times=None,
                 common_random_numbers=True, workers=1):
    """Simulate the Arratia reference once and one ensemble per kernel.

    Parameters
    ----------
    kernels : sequence of SmoothedKernel
        One per epsilon, in strictly decreasing epsilon order.
    cfg : FlowConfig
        Shared flow configuration. Its scheme selects the simulator for the
        epsilon rows (``arratia`` compares the reference with itself); the
        reference always uses the Arratia scheme.
    replicas : int
    seed : int
        Master seed. With ``common_random_numbers`` every row reuses the
        reference streams; otherwise row ``k`` uses stream group ``k + 1``.
    eta : float, optional
        Near-coalescence level, default ``0.02 (u_n - u_1)``.
    probe_times : sequence of float, optional
        Default ``(T/4, T/2, T)``; must lie on the recorded grid.
    workers : int
        Simulation processes; the report does not depend on it.
    """
    if replicas <= 0:
        raise ValueError("a report needs at least one replica")
    if cfg.n < 2:
        raise ValueError("a convergence report needs at least two start points")
    eps = [sk.epsilon for sk in kernels]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ValueError("kernels must be ordered by strictly decreasing epsilon")
    if eta is None:
        eta = 0.02 * (cfg.start_points[-1] - cfg.start_points[0])
    if probe_times is None:
        probe_times = (cfg.horizon / 4, cfg.horizon / 2, cfg.horizon)
    probe_times = tuple(float(t) for t in probe_times)

    ref_cfg = cfg.with_scheme("arratia")
    ref = simulate(ref_cfg, replicas, seed, workers=workers)
    for t in probe_times:
        ref.time_index(t)
    null_ens = simulate(ref_cfg, replicas, seed, workers=workers, group=NULL_GROUP)

    rows = []
    for k, sk in enumerate(kernels):
        group = 0 if common_random_numbers else k + 1
        try:
            ens = simulate(cfg, replicas, seed, sk=sk, workers=workers, group=group)
            rows.append(_compare(ens, ref, probe_times, eta, sk.epsilon, "ok"))
        except (SimulationError, ValueError, FloatingPointError) as exc:
            rows.append(_failed(sk.epsilon, exc))
    p_ref, se_ref = near_coalescence_prob(ref, eta)
    reference = ReportRow(0.0, 0.0, 0.0, p_ref, se_ref, 0.0, "reference")
    null = _compare(null_ens, ref, probe_times, eta, math.inf, "null")
    return ConvergenceReport(
        epsilon_list=tuple(eps),
        rows=tuple(rows),
        reference=reference,
        null=null,
        probe_times=probe_times,
        eta=float(eta),
        replicas=int(replicas),
        master_seed=int(seed),
        common_random_numbers=bool(common_random_numbers),
        meta={"reference_coalesced_fraction": float(ref.coalesced_by().mean())},
    )
