"""Smoothed kernels ``psi_eps`` over atomic measures and their covariance.

For ``nu = sum_k w_k delta_{a_k}``

    psi_eps(z)   = c_eps * sum_k w_k phi_eps(z - a_k)
    Gamma_eps(z) = c_eps^2 * sum_{k,l} w_k w_l Phi_eps(z - (a_k - a_l))
    c_eps        = [sum_{k,l} w_k w_l Phi_eps(a_k - a_l)]^(-1/2)

The double sums are grouped by exact atom difference, so ``Gamma_eps`` costs
one table lookup per point of ``D``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .kernel import ScaledKernel
from .measure import AtomicMeasure, as_fraction
from .quadrature import integrate_pieces

__all__ = [
    "SmoothedKernel",
    "RaisedCosine",
    "normalization_c",
    "comparison_function",
    "pointwise_limit_error",
    "psi_sq_weak_limit_check",
    "psd_min_eigenvalue",
    "continuity_bound_slack",
]


def normalization_c(kernel, measure):
    """``c_eps``; the bracket is at least ``sum w_k^2 > 0``."""
    diffs = measure.pair_sums()
    d = np.array([float(k) for k in diffs])
    s = np.array(list(diffs.values()))
    bracket = math.fsum(s * kernel.autocorrelation(d))
    return bracket**-0.5


@dataclass(frozen=True)
class SmoothedKernel:
    """``psi_eps`` built from a scaled mollifier and an atomic measure."""

    kernel: ScaledKernel
    measure: AtomicMeasure
    c: float = field(init=False)
    _diffs: np.ndarray = field(init=False, repr=False, compare=False)
    _pair_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pairs = self.measure.pair_sums()
        object.__setattr__(self, "c", normalization_c(self.kernel, self.measure))
        object.__setattr__(self, "_diffs", np.array([float(k) for k in pairs]))
        object.__setattr__(self, "_pair_weights", np.array(list(pairs.values())))

    @classmethod
    def build(cls, mollifier, epsilon, measure):
        return cls(mollifier.scaled(epsilon), measure)

    @property
    def epsilon(self):
        return self.kernel.epsilon

    def support(self):
        r = self.kernel.support_radius
        a = self.measure.atom_values
        return float(a[0] - r), float(a[-1] + r)

    def breakpoints(self):
        """Support edges of every atom's bump, plus the atoms themselves."""
        r = self.kernel.support_radius
        a = self.measure.atom_values
        return np.unique(np.concatenate([a - r, a, a + r]))

    def psi(self, z):
        z = np.asarray(z, dtype=float)
        a = self.measure.atom_values
        w = self.measure.weight_values
        return self.c * np.sum(w * self.kernel(z[..., None] - a), axis=-1)

    __call__ = psi

    def gamma(self, z):
        """``Gamma_eps(z)``, vectorized over ``z``."""
        z = np.asarray(z, dtype=float)
        phi = self.kernel.autocorrelation(z[..., None] - self._diffs)
        return self.c**2 * np.sum(self._pair_weights * phi, axis=-1)

    gamma_eps = gamma


def comparison_function(measure, kernel_delta, z):
    """``h_delta(z) = sum_{k,l} w_k w_l Phi_delta(z + a_k - a_l) / sum w_k^2``.

    Dominates ``Gamma_eps`` pointwise for every ``eps < delta``.
    """
    pairs = measure.pair_sums()
    d = np.array([float(k) for k in pairs])
    s = np.array(list(pairs.values()))
    z = np.asarray(z, dtype=float)
    return np.sum(s * kernel_delta.autocorrelation(z[..., None] + d), axis=-1) / measure.diag_mass


def pointwise_limit_error(kernels, z):
    """``|Gamma_eps(z) - Gamma_0(z)|`` for each smoothed kernel, at exact ``z``."""
    z = as_fraction(z)
    out = []
    for sk in kernels:
        out.append(abs(float(sk.gamma(float(z))) - sk.measure.gamma0(z)))
    return out


@dataclass(frozen=True)
class RaisedCosine:
    """``height * (1 + cos(pi (z - center) / half_width)) / 2`` on ``|z - center| < half_width``."""

    center: float
    half_width: float
    height: float = 1.0

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError("half_width must be positive")

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        u = (z - self.center) / self.half_width
        return np.where(np.abs(u) < 1.0, 0.5 * self.height * (1.0 + np.cos(np.pi * u)), 0.0)

    @property
    def support(self):
        return self.center - self.half_width, self.center + self.half_width


def psi_sq_weak_limit_check(kernels, f, tol=1e-12):
    """``|int f psi_eps^2 dz - int f d nu_0|`` per smoothed kernel.

    ``f`` must expose ``support`` (a finite interval) when it is not a plain
    callable with known compact support; kinks of ``f`` at its support ends
    are used as quadrature breakpoints.
    """
    out = []
    for sk in kernels:
        nu0 = sk.measure.nu0()
        target = math.fsum(m * float(f(a)) for a, m in zip(nu0.atom_values, nu0.weights))
        pts = list(sk.breakpoints())
        lo, hi = getattr(f, "support", sk.support())
        pts += [p for p in (lo, hi) if sk.support()[0] < p < sk.support()[1]]
        value = integrate_pieces(lambda z: f(z) * sk.psi(z) ** 2, pts, tol=tol)
        out.append(abs(value - target))
    return out


def psd_min_eigenvalue(cov, grid):
    """Smallest eigenvalue of the Gram matrix ``[cov(z_i - z_j)]``."""
    grid = np.asarray(grid, dtype=float)
    if grid.size > 64:
        raise ValueError("grid size must not exceed 64")
    gram = np.asarray(cov(grid[:, None] - grid[None, :]), dtype=float)
    gram = 0.5 * (gram + gram.T)
    return float(np.linalg.eigvalsh(gram)[0])


def continuity_bound_slack(cov, x, y):
    """``2 sqrt(1 - cov(x - y)) - |cov(x) - cov(y)|``; non-negative for a unit covariance."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return 2.0 * np.sqrt(np.clip(1.0 - cov(x - y), 0.0, None)) - np.abs(cov(x) - cov(y))
