"""Finite atomic measures and their limit covariance.

Atom positions are kept as :class:`fractions.Fraction`, so the diagonal sets
``{(q1, q2): q1 - q2 = z}`` are matched exactly: ``gamma0(z)`` sums
``w_k w_l`` over the atom pairs whose difference is exactly ``z``.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational

import numpy as np

__all__ = ["AtomicMeasure", "LimitCovariance", "as_fraction"]


def as_fraction(value):
    """Exact rational from ``"p/q"`` strings, ints, Rationals or floats.

    Floats convert to their exact binary value, so ``0.1`` is not ``1/10``;
    pass strings when the decimal value is meant.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (str, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"atom position must be finite, got {value!r}")
        return Fraction(value)
    raise TypeError(f"cannot interpret {value!r} as a rational atom position")


@dataclass(frozen=True)
class LimitCovariance:
    """``Gamma_0`` tabulated on its finite support ``D``."""

    source: "AtomicMeasure"
    diag_mass: float
    support: dict = field(repr=False)

    def __call__(self, z):
        return self.support.get(as_fraction(z), 0.0)


@dataclass(frozen=True)
class AtomicMeasure:
    """``sum_k w_k delta_{a_k}`` with finitely many atoms.

    Atoms are stored sorted ascending together with their weights.
    """

    atoms: tuple
    weights: tuple

    def __post_init__(self):
        atoms = tuple(as_fraction(a) for a in self.atoms)
        weights = tuple(float(w) for w in self.weights)
        if not atoms:
            raise ValueError("an atomic measure needs at least one atom")
        if len(atoms) != len(weights):
            raise ValueError(f"{len(atoms)} atoms but {len(weights)} weights")
        if len(set(atoms)) != len(atoms):
            raise ValueError("atom positions must be pairwise distinct")
        for a, w in zip(atoms, weights):
            if not (w > 0 and math.isfinite(w)):
                raise ValueError(f"weight of atom {a} must be positive and finite, got {w!r}")
        order = sorted(range(len(atoms)), key=atoms.__getitem__)
        object.__setattr__(self, "atoms", tuple(atoms[i] for i in order))
        object.__setattr__(self, "weights", tuple(weights[i] for i in order))

    @classmethod
    def dirac(cls, atom=0, weight=1.0):
        return cls((atom,), (weight,))

    @property
    def atom_values(self):
        return np.array([float(a) for a in self.atoms])

    @property
    def weight_values(self):
        return np.array(self.weights)

    @property
    def total_mass(self):
        return math.fsum(self.weights)

    @property
    def diag_mass(self):
        """``nu x nu`` of the diagonal, i.e. ``sum_k w_k^2``."""
        return math.fsum(w * w for w in self.weights)

    def pair_sums(self):
        """Map each exact difference ``a_k - a_l`` to ``sum w_k w_l`` over such pairs."""
        sums = defaultdict(list)
        for ak, wk in zip(self.atoms, self.weights):
            for al, wl in zip(self.atoms, self.weights):
                sums[ak - al].append(wk * wl)
        return {d: math.fsum(v) for d, v in sorted(sums.items())}

    def support_D(self):
        """The finite set ``D`` of exact differences where ``Gamma_0 > 0``."""
        return frozenset(self.pair_sums())

    def limit_covariance(self):
        diag = self.diag_mass
        table = {d: s / diag for d, s in self.pair_sums().items()}
        table[Fraction(0)] = 1.0
        return LimitCovariance(self, diag, table)

    def gamma0(self, z):
        """``Gamma_0(z) = nu^2(Delta_z) / nu^2(Delta_0)`` for an exact rational ``z``."""
        z = as_fraction(z)
        if z == 0:
            return 1.0
        num = math.fsum(
            wk * wl
            for ak, wk in zip(self.atoms, self.weights)
            for al, wl in zip(self.atoms, self.weights)
            if ak - al == z
        )
        return num / self.diag_mass

    def gamma0_float(self, z, atol=1e-12):
        """``Gamma_0`` at a float: snap to the nearest point of ``D`` within ``atol``, else 0."""
        support = sorted(self.support_D())
        vals = np.array([float(d) for d in support])
        i = int(np.argmin(np.abs(vals - z)))
        if abs(vals[i] - z) <= atol:
            return self.gamma0(support[i])
        return 0.0

    def nu0(self):
        """Probability measure on the same atoms with masses ``w_k^2 / sum w_l^2``."""
        sq = [w * w for w in self.weights]
        masses = [s / math.fsum(sq) for s in sq]
        total = math.fsum(masses)
        return AtomicMeasure(self.atoms, tuple(m / total for m in masses))

    def gamma0_sup_outside(self, delta):
        """``max Gamma_0`` over ``D`` minus ``(-delta, delta)``; 0 if nothing remains."""
        if not delta > 0:
            raise ValueError(f"delta must be positive, got {delta!r}")
        delta = as_fraction(delta)
        outside = [self.gamma0(d) for d in self.support_D() if abs(d) >= delta]
        return max(outside, default=0.0)

    def max_difference(self):
        return self.atoms[-1] - self.atoms[0]

    def min_positive_gap(self):
        """Smallest positive element of ``D``; None for a single atom."""
        pos = [d for d in self.support_D() if d > 0]
        return min(pos) if pos else None
