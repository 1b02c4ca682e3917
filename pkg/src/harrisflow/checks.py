"""Property checks run by ``harrisflow validate``.

Each check yields a :class:`CheckResult`; the suite passes when all do.
Integrals here are computed with ``scipy.integrate.quad``, independently of
the Gauss-Legendre tables used by the kernels themselves.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.integrate import quad

from .covariance import (
    SmoothedKernel,
    comparison_function,
    continuity_bound_slack,
    psd_min_eigenvalue,
)

__all__ = ["CheckResult", "run_checks", "results_csv", "quad_psi_sq", "quad_phi_sq"]


@dataclass(frozen=True)
class CheckResult:
    check: str
    subject: str
    value: float
    tolerance: float
    passed: bool


def quad_phi_sq(kernel):
    r = kernel.support_radius
    return quad(lambda q: float(kernel(q)) ** 2, -r, r, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def quad_psi_sq(sk):
    pts = sk.breakpoints()
    total = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        total += quad(lambda z: float(sk.psi(z)) ** 2, lo, hi, epsabs=1e-13, epsrel=1e-13, limit=200)[0]
    return total


def _result(check, subject, value, tol, ok):
    return CheckResult(check, subject, float(value), float(tol), bool(ok))


def run_checks(mollifier, measure, epsilons, seed=0, psd_grids=20):
    """Run the kernel, measure and covariance property suite."""
    out = []
    rng = np.random.default_rng(seed)

    base = mollifier.scaled(1.0)
    err = abs(quad_phi_sq(base) - 1.0)
    out.append(_result("mollifier_unit_norm", mollifier.shape, err, 1e-10, err <= 1e-10))

    # limit objects
    lim = measure.limit_covariance()
    D = sorted(measure.support_D())
    out.append(_result("gamma0_at_zero", "D", abs(measure.gamma0(0) - 1.0), 0.0, measure.gamma0(0) == 1.0))
    asym = max(abs(measure.gamma0(d) - measure.gamma0(-d)) for d in D)
    out.append(_result("gamma0_symmetric", "D", asym, 0.0, asym == 0.0))
    off = [lim(d) for d in D if d != 0]
    worst = max(off, default=0.0)
    out.append(_result("gamma0_below_one_off_zero", "D", worst, 1.0, all(0.0 < v < 1.0 for v in off)))
    nu0 = measure.nu0()
    mass_err = abs(math.fsum(nu0.weights) - 1.0)
    out.append(_result("nu0_probability", "nu0", mass_err, 1e-15,
                       mass_err <= 1e-15 and nu0.atoms == measure.atoms))

    span = measure.max_difference()
    beyond = [span + Fraction(1, 2), span + 1, -span - 1]
    far = max(measure.gamma0(z) for z in beyond)
    out.append(_result("gamma0_vanishes_beyond_D", "|z| > max D", far, 0.0, far == 0.0))
    gap = measure.min_positive_gap()
    deltas = [Fraction(1, 10)] if gap is None else [gap / 2, gap, span]
    for delta in deltas:
        s = measure.gamma0_sup_outside(delta)
        out.append(_result("gamma0_sup_outside_below_one", f"delta={float(delta):g}", s, 1.0, s < 1.0))

    pts = sorted(set(D) | {a + b for a in D for b in D})
    slack = min(
        2.0 * math.sqrt(max(0.0, 1.0 - measure.gamma0(x - y))) - abs(measure.gamma0(x) - measure.gamma0(y))
        for x in pts
        for y in pts
    )
    out.append(_result("gamma0_continuity_bound", "D + D", slack, -1e-15, slack >= -1e-15))

    kernels = [SmoothedKernel.build(mollifier, e, measure) for e in epsilons]
    lo, hi = float(measure.atoms[0]) - 1.0, float(measure.atoms[-1]) + 1.0
    for sk in kernels:
        tag = f"eps={sk.epsilon:g}"
        err = abs(quad_psi_sq(sk) - 1.0)
        out.append(_result("psi_normalization", tag, err, 1e-8, err <= 1e-8))
        err0 = abs(float(sk.gamma(0.0)) - 1.0)
        out.append(_result("gamma_eps_at_zero", tag, err0, 1e-8, err0 <= 1e-8))
        worst = min(psd_min_eigenvalue(sk.gamma, rng.uniform(lo, hi, 16)) for _ in range(psd_grids))
        out.append(_result("gamma_eps_psd", tag, worst, -1e-8, worst >= -1e-8))
        x = rng.uniform(lo - 1, hi + 1, 500)
        y = rng.uniform(lo - 1, hi + 1, 500)
        slack = float(np.min(continuity_bound_slack(sk.gamma, x, y)))
        out.append(_result("gamma_eps_continuity_bound", tag, slack, -1e-12, slack >= -1e-12))
        if gap is None or 4.0 * sk.kernel.support_radius <= float(gap):
            err = max(abs(float(sk.gamma(float(d))) - measure.gamma0(d)) for d in D)
            out.append(_result("gamma_eps_equals_gamma0_on_D", tag, err, 1e-8, err <= 1e-8))

    z = np.linspace(lo - 1, hi + 1, 801)
    for sk, delta_kernel in zip(kernels[1:], kernels[:-1]):
        h = comparison_function(measure, delta_kernel.kernel, z)
        excess = float(np.max(sk.gamma(z) - h))
        out.append(_result("gamma_eps_below_comparison", f"eps={sk.epsilon:g},delta={delta_kernel.epsilon:g}",
                           excess, 1e-12, excess <= 1e-12))
    return out


def results_csv(results):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["check", "subject", "value", "tolerance", "passed"])
    for r in results:
        w.writerow([r.check, r.subject, repr(r.value), repr(r.tolerance), "pass" if r.passed else "fail"])
    return buf.getvalue()
