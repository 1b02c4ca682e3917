"""Mollifiers, their epsilon-scaled family and autocorrelations.

A :class:`Mollifier` is a symmetric, unimodal, compactly supported bump with
unit L2 norm. Its autocorrelation

    Phi(z) = integral of phi(z + q) phi(q) dq

is tabulated once per mollifier on a dense grid (Gauss-Legendre per node,
clamped cubic spline between nodes). Scaled kernels
``phi_eps(q) = eps**-0.5 * phi(q / eps)`` reuse that table through the
identity ``Phi_eps(z) = Phi(z / eps)``, so no integral is ever computed per
epsilon.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .quadrature import gauss_legendre

__all__ = ["SHAPES", "Mollifier", "ScaledKernel"]

SHAPES = ("standard-bump", "polynomial-bump")


def _standard_profile(s):
    s = np.asarray(s, dtype=float)
    # exp(-1/(1 - s^2)) underflows to exactly 0 long before s^2 reaches this cap
    t = 1.0 - np.minimum(s * s, 1.0 - 1e-3)
    return np.where(np.abs(s) < 1.0, np.exp(-1.0 / t), 0.0)


def _polynomial_profile(s):
    s = np.asarray(s, dtype=float)
    t = np.clip(1.0 - s * s, 0.0, None)
    return t**4


_PROFILES = {
    "standard-bump": _standard_profile,
    "polynomial-bump": _polynomial_profile,
}


@dataclass(frozen=True)
class Mollifier:
    """Unit-L2 bump supported on ``[-support_radius, support_radius]``.

    Parameters
    ----------
    shape : {"standard-bump", "polynomial-bump"}
        ``C exp(-1/(1 - s^2))`` or ``C (1 - s^2)^4`` with ``s = q / R``.
        The polynomial bump is only C^3 at the support edge; it is kept as
        a finitely smooth alternative.
    support_radius : float
        The radius ``R`` of the support.
    grid_resolution : int
        Autocorrelation table nodes per unit of ``z / R``; the table spacing
        is ``R / grid_resolution``.
    tol : float
        Absolute quadrature tolerance for the normalization and the table.
    """

    shape: str = "standard-bump"
    support_radius: float = 1.0
    grid_resolution: int = 2048
    tol: float = 1e-10
    l2_norm_constant: float = field(init=False, repr=False)
    _table: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.shape not in _PROFILES:
            raise ValueError(f"unknown mollifier shape {self.shape!r}; expected one of {SHAPES}")
        if not (self.support_radius > 0 and math.isfinite(self.support_radius)):
            raise ValueError(f"support_radius must be positive, got {self.support_radius!r}")
        profile = _PROFILES[self.shape]

        # Autocorrelation of the unnormalized unit profile g on y in [0, 2]:
        # I(y) = int_{-1}^{1-y} g(y + s) g(s) ds. I(0) = int g^2 fixes C.
        h = 1.0 / self.grid_resolution
        y = np.arange(2 * self.grid_resolution + 1) * h
        lo = np.full_like(y, -1.0)
        hi = 1.0 - y
        shift = y[:-1, None]
        integrand = lambda s: profile(s + shift) * profile(s)
        vals = gauss_legendre(integrand, lo[:-1], hi[:-1], tol=self.tol * 1e-3)
        norm_sq = vals[0]
        table = np.append(vals / norm_sq, 0.0)
        table[0] = 1.0
        spline = CubicSpline(y, table, bc_type="clamped")
        object.__setattr__(self, "l2_norm_constant", 1.0 / math.sqrt(norm_sq * self.support_radius))
        object.__setattr__(self, "_table", (h, np.ascontiguousarray(spline.c), y.size - 1))

    def __call__(self, q):
        """Evaluate ``phi(q)``; zero outside the open support."""
        q = np.asarray(q, dtype=float)
        return self.l2_norm_constant * _PROFILES[self.shape](q / self.support_radius)

    def autocorrelation(self, z):
        """``Phi(z)`` from the cached table; exactly 0 for ``|z| >= 2R``."""
        return self._unit_autocorrelation(np.abs(np.asarray(z, dtype=float)) / self.support_radius)

    def _unit_autocorrelation(self, y):
        h, c, nint = self._table
        y = np.asarray(y, dtype=float)
        idx = np.minimum((y / h).astype(np.intp), nint - 1)
        t = y - idx * h
        val = ((c[0, idx] * t + c[1, idx]) * t + c[2, idx]) * t + c[3, idx]
        return np.where(y >= 2.0, 0.0, np.clip(val, 0.0, 1.0))

    def scaled(self, epsilon):
        return ScaledKernel(self, epsilon)


@dataclass(frozen=True)
class ScaledKernel:
    """The family member ``phi_eps(q) = eps**-0.5 phi(q / eps)``."""

    base: Mollifier
    epsilon: float

    def __post_init__(self):
        if not (self.epsilon > 0 and math.isfinite(self.epsilon)):
            raise ValueError(f"epsilon must be positive and finite, got {self.epsilon!r}")

    @property
    def support_radius(self):
        return self.epsilon * self.base.support_radius

    def __call__(self, q):
        q = np.asarray(q, dtype=float)
        return self.base(q / self.epsilon) / math.sqrt(self.epsilon)

    def autocorrelation(self, z):
        """``Phi_eps(z) = Phi(z / eps)``; in [0, 1], zero for ``|z| >= 2 eps R``."""
        y = np.abs(np.asarray(z, dtype=float)) / self.support_radius
        return self.base._unit_autocorrelation(y)
