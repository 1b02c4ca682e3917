"""Monte Carlo simulation of n-point motions.

Three schemes share one engine:

``arratia``
    Independent Brownian motions that merge for good on meeting. Each step
    moves every cluster by its leader's (lowest index) Gaussian increment.
    An adjacent pair of clusters merges when its gap changes sign, or, with
    bridge refinement, with the Brownian-bridge probability
    ``exp(-d_s d_t / dt)`` that a variance-2 gap crossed zero within the step.
    A merged particle takes its left neighbour's position, which is exact in
    law at grid times for two particles.
``harris-cholesky``
    Euler steps with covariance ``Gamma_eps(x_i - x_j) dt``, drawn through
    the symmetric square root of the eigenvalue-clipped matrix. Coincident
    particles therefore receive identical increments, and non-interacting
    ones keep their own noise unchanged.
``harris-sheet``
    Euler discretization of ``dx = int psi_eps(x - q) W(dq, dt)`` on a
    uniform cell grid of width ``h``, each cell increment ``N(0, h dt)``.

After every Harris step the coordinates are sorted; each repaired adjacent
inversion counts as a crossing and the run fails with :class:`CrossingRateError`
once crossings exceed 1% of ``steps * (n - 1) * replicas``.

Replicas are simulated in fixed blocks of :data:`BLOCK_SIZE` consecutive
indices (vectorized within a block); a worker pool only changes which process
runs which block, so results do not depend on the number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from itertools import combinations

import numpy as np

from . import rng
from .model import FlowConfig, PathEnsemble

__all__ = [
    "BLOCK_SIZE",
    "CROSSING_LIMIT",
    "SimulationError",
    "CrossingRateError",
    "SheetExitError",
    "SheetGrid",
    "simulate",
    "simulate_arratia",
    "simulate_harris_sheet",
    "simulate_harris_cholesky",
]

BLOCK_SIZE = 1024
CHUNK_STEPS = 128
CROSSING_LIMIT = 0.01


class SimulationError(RuntimeError):
    pass


class CrossingRateError(SimulationError):
    """Too many order repairs: the time step is too coarse for the kernel."""


class SheetExitError(SimulationError):
    """A particle left the spatial window covered by the sheet grid."""


class SheetGrid:
    """Cell grid for the Wiener sheet.

    Particles may range over ``[min u - 6 sqrt(T), max u + 6 sqrt(T)]``; the
    cells extend further by the reach of ``psi_eps`` so every cell a particle
    can see exists. Cell ``c`` is centred at ``q_lo + (c + 1/2) h``.

    Since ``psi_eps = c_eps sum_k w_k phi_eps(. - a_k)``, a particle's
    increment splits into one sum per atom, each over the ``width`` cells
    under a single bump. Cells shared by several bumps or particles carry the
    same increment, so the split is exact.
    """

    def __init__(self, cfg, sk, h):
        self.radius = sk.kernel.support_radius
        self.atoms = sk.measure.atom_values
        self.amplitudes = sk.c * sk.measure.weight_values
        self.kernel = sk.kernel
        reach = 6.0 * math.sqrt(cfg.horizon)
        self.x_lo = min(cfg.start_points) - reach
        self.x_hi = max(cfg.start_points) + reach
        self.q_lo = self.x_lo - self.atoms[-1] - self.radius
        q_hi = self.x_hi - self.atoms[0] + self.radius
        self.h = h
        self.n_cells = int(math.ceil((q_hi - self.q_lo) / h))
        self.width = int(math.floor(2.0 * self.radius / h)) + 1

    def centres(self, cells):
        return self.q_lo + (cells + 0.5) * self.h

    def windows(self, x):
        """Cell indices under each bump, shape ``x.shape + (n_atoms, width)``."""
        left = x[..., None] - self.atoms - self.radius
        first = np.ceil((left - self.q_lo) / self.h - 0.5).astype(np.int64)
        cells = first[..., None] + np.arange(self.width)
        return np.clip(cells, 0, self.n_cells - 1)

    def increments(self, keys, step, cells, dt):
        """Cell increments ``N(0, h dt)`` addressed by ``(replica key, step, cell)``."""
        counter = np.uint64(step) * np.uint64(self.n_cells) + cells.astype(np.uint64)
        key = keys.reshape(keys.shape + (1,) * (cells.ndim - 1))
        return rng.counter_normals(key, counter) * math.sqrt(self.h * dt)

    def step(self, keys, step, x, dt):
        """Euler increment of every particle, shape ``x.shape``."""
        cells = self.windows(x)
        dw = self.increments(keys, step, cells, dt)
        offsets = x[..., None, None] - self.atoms[:, None] - self.centres(cells)
        phi = self.kernel(offsets)
        return np.einsum("k,...kw->...", self.amplitudes, phi * dw)


def _block_bounds(replicas):
    return [(s, min(s + BLOCK_SIZE, replicas)) for s in range(0, replicas, BLOCK_SIZE)]


def _step_sqrt_2x2(gamma, noise):
    lp = np.sqrt(np.clip(1.0 + gamma, 0.0, None))
    lm = np.sqrt(np.clip(1.0 - gamma, 0.0, None))
    a = 0.5 * (lp + lm)
    b = 0.5 * (lp - lm)
    n0 = noise[:, 0]
    n1 = noise[:, 1]
    return np.stack([a * n0 + b * n1, b * n0 + a * n1], axis=1)


def _step_sqrt(gamma, noise, n, iu):
    cov = np.empty((noise.shape[0], n, n))
    cov[:, iu[0], iu[1]] = gamma
    cov[:, iu[1], iu[0]] = gamma
    cov[:, np.arange(n), np.arange(n)] = 1.0
    w, v = np.linalg.eigh(cov)
    root = np.einsum("bij,bj,bkj->bik", v, np.sqrt(np.clip(w, 0.0, None)), v)
    return np.einsum("bij,bj->bi", root, noise)


def _run_block(scheme, cfg, sk, master_seed, group, start, stop, h, total):
    n = cfg.n
    dt = cfg.time_step
    sqdt = math.sqrt(dt)
    n_steps = cfg.n_steps
    stride = cfg.record_stride
    reps = range(start, stop)
    b = stop - start
    pairs = list(combinations(range(n), 2))
    npairs = len(pairs)
    iu = (np.array([p[0] for p in pairs], dtype=np.intp), np.array([p[1] for p in pairs], dtype=np.intp))

    n_rec = n_steps // stride + 1
    x = np.tile(np.asarray(cfg.start_points), (b, 1))
    paths = np.empty((b, n_rec, n))
    cov_rec = np.zeros((b, n_rec, max(npairs, 0)))
    harris = scheme != "arratia"
    gint_rec = np.zeros((b, n_rec, npairs)) if harris else None
    cov_acc = np.zeros((b, npairs))
    gint_acc = np.zeros((b, npairs))
    coal = np.full((b, npairs), -1, dtype=np.int64)
    paths[:, 0] = x
    crossings = 0
    # a block alone over the whole run's budget cannot pass: stop early
    crossing_budget = CROSSING_LIMIT * n_steps * max(n - 1, 1) * total

    same = x[:, iu[1]] == x[:, iu[0]]
    coal[same] = 0

    if scheme == "arratia":
        leader = np.tile(np.searchsorted(np.asarray(cfg.start_points), cfg.start_points), (b, 1))
        bridge = cfg.bridge_refinement and n > 1
        ugens = rng.replica_generators(master_seed, reps, rng.UNIFORMS, group) if bridge else None
    if scheme == "harris-sheet":
        grid = SheetGrid(cfg, sk, h)
        keys = rng.sheet_keys(master_seed, reps, group)
    else:
        gens = rng.replica_generators(master_seed, reps, rng.NORMALS, group)

    for k0 in range(0, n_steps, CHUNK_STEPS):
        length = min(CHUNK_STEPS, n_steps - k0)
        if scheme != "harris-sheet":
            noise = np.stack([g.standard_normal((length, n)) for g in gens], axis=1)
        if scheme == "arratia" and bridge:
            unif = np.stack([g.random((length, n - 1)) for g in ugens], axis=1)
        for kk in range(length):
            k = k0 + kk
            if scheme == "arratia":
                dx = np.take_along_axis(noise[kk], leader, axis=1) * sqdt
                new = x + dx
                for i in range(n - 1):
                    distinct = leader[:, i + 1] != leader[:, i]
                    d_t = new[:, i + 1] - new[:, i]
                    merge = distinct & (d_t <= 0.0)
                    if bridge:
                        d_s = x[:, i + 1] - x[:, i]
                        p = np.exp(-np.clip(d_s, 0.0, None) * np.clip(d_t, 0.0, None) / dt)
                        merge |= distinct & (unif[kk, :, i] < p)
                    if merge.any():
                        old = leader[:, i + 1].copy()
                        for j in range(i + 1, n):
                            m = merge & (leader[:, j] == old)
                            leader[m, j] = leader[m, i]
                            new[m, j] = new[m, i]
            else:
                gaps = x[:, iu[1]] - x[:, iu[0]]
                gamma = sk.gamma(gaps)
                gint_acc += gamma * dt
                if scheme == "harris-cholesky":
                    if n == 1:
                        dx = noise[kk] * sqdt
                    elif n == 2:
                        dx = _step_sqrt_2x2(gamma[:, 0], noise[kk]) * sqdt
                    else:
                        dx = _step_sqrt(gamma, noise[kk], n, iu) * sqdt
                else:
                    dx = grid.step(keys, k, x, dt)
                if n > 1:
                    # coincident neighbours move together
                    for i in range(n - 1):
                        tie = x[:, i + 1] == x[:, i]
                        if tie.any():
                            dx[tie, i + 1] = dx[tie, i]
                new = x + dx
                if n > 1:
                    inv = new[:, 1:] < new[:, :-1]
                    ninv = int(inv.sum())
                    if ninv:
                        crossings += ninv
                        new.sort(axis=1)
                if scheme == "harris-sheet":
                    out = (new.min(axis=1) < grid.x_lo) | (new.max(axis=1) > grid.x_hi)
                    if out.any():
                        r = start + int(np.flatnonzero(out)[0])
                        raise SheetExitError(f"replica {r} left the sheet window at step {k + 1}")
            if npairs:
                d = new - x
                cov_acc += d[:, iu[0]] * d[:, iu[1]]
                fresh = (coal < 0) & (new[:, iu[1]] == new[:, iu[0]])
                coal[fresh] = k + 1
            x = new
            if (k + 1) % stride == 0:
                j = (k + 1) // stride
                paths[:, j] = x
                cov_rec[:, j] = cov_acc
                if harris:
                    gint_rec[:, j] = gint_acc
        if crossings > crossing_budget:
            raise CrossingRateError(
                f"{crossings} order repairs exceed {CROSSING_LIMIT:.0%} of steps x pairs x replicas; "
                f"decrease time_step"
            )
    return paths, cov_rec, gint_rec, coal, crossings


def _run_block_star(args):
    return _run_block(*args)


def simulate(cfg, replicas, rng_seed, sk=None, workers=1, group=0):
    """Simulate ``replicas`` independent copies of the configured n-point motion.

    Parameters
    ----------
    cfg : FlowConfig
    replicas : int
        Number of replicas; 0 gives an empty ensemble.
    rng_seed : int
        Master seed; replica ``r`` uses streams keyed by ``(group, r, stream)``.
    sk : SmoothedKernel, optional
        Required by the Harris schemes.
    workers : int
        Process count for the replica blocks. Results are identical for any
        value.
    group : int
        Stream group (see :mod:`harrisflow.flow.rng`).

    Returns
    -------
    PathEnsemble
    """
    if not isinstance(cfg, FlowConfig):
        raise TypeError("cfg must be a FlowConfig")
    if replicas < 0:
        raise ValueError("replicas must be non-negative")
    if rng_seed < 0:
        raise ValueError("rng_seed must be a non-negative integer")
    scheme = cfg.scheme
    h = None
    if scheme != "arratia":
        if sk is None:
            raise ValueError(f"scheme {scheme!r} needs a SmoothedKernel")
    if scheme == "harris-sheet":
        limit = sk.kernel.support_radius / 8.0
        h = limit if cfg.sheet_space_step is None else cfg.sheet_space_step
        if h > limit * (1 + 1e-12):
            raise ValueError(f"sheet_space_step {h!r} exceeds eps R / 8 = {limit!r}")

    n = cfg.n
    npairs = n * (n - 1) // 2
    n_rec = len(cfg.times)
    jobs = [(scheme, cfg, sk, rng_seed, group, s, e, h, replicas) for s, e in _block_bounds(replicas)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_run_block_star, jobs))
    else:
        parts = [_run_block(*j) for j in jobs]

    harris = scheme != "arratia"
    if parts:
        paths = np.concatenate([p[0] for p in parts])
        cov = np.concatenate([p[1] for p in parts])
        gint = np.concatenate([p[2] for p in parts]) if harris else None
        coal = np.concatenate([p[3] for p in parts])
    else:
        paths = np.empty((0, n_rec, n))
        cov = np.empty((0, n_rec, npairs))
        gint = np.empty((0, n_rec, npairs)) if harris else None
        coal = np.empty((0, npairs), dtype=np.int64)
    crossings = sum(p[4] for p in parts)
    if harris and replicas and crossings > CROSSING_LIMIT * cfg.n_steps * max(n - 1, 1) * replicas:
        raise CrossingRateError(
            f"crossing rate {crossings / (cfg.n_steps * max(n - 1, 1) * replicas):.3%} exceeds "
            f"{CROSSING_LIMIT:.0%}; decrease time_step"
        )
    return PathEnsemble(
        flavor=scheme,
        start_points=cfg.start_points,
        times=cfg.times,
        time_step=cfg.time_step,
        paths=paths,
        covariation=cov,
        gamma_integral=gint,
        coalescence_step=coal,
        crossing_count=crossings,
        seed_record={"master_seed": int(rng_seed), "group": int(group), "replicas": int(replicas)},
    )


def simulate_arratia(cfg, replicas, rng_seed, workers=1, group=0):
    if cfg.scheme != "arratia":
        raise ValueError("simulate_arratia needs scheme='arratia'")
    return simulate(cfg, replicas, rng_seed, workers=workers, group=group)


def simulate_harris_sheet(sk, cfg, replicas, rng_seed, workers=1, group=0):
    if cfg.scheme != "harris-sheet":
        raise ValueError("simulate_harris_sheet needs scheme='harris-sheet'")
    return simulate(cfg, replicas, rng_seed, sk=sk, workers=workers, group=group)


def simulate_harris_cholesky(sk, cfg, replicas, rng_seed, workers=1, group=0):
    if cfg.scheme != "harris-cholesky":
        raise ValueError("simulate_harris_cholesky needs scheme='harris-cholesky'")
    return simulate(cfg, replicas, rng_seed, sk=sk, workers=workers, group=group)
