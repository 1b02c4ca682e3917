"""Bundled measures, epsilon ladders, test functions and config files."""
from __future__ import annotations

import math
from importlib import resources

from .covariance import RaisedCosine
from .kernel import SHAPES
from .measure import AtomicMeasure

__all__ = [
    "STANDARD_EPSILONS",
    "SHAPES",
    "bundled_measures",
    "weak_limit_test_function",
    "config_path",
    "CONFIG_NAMES",
]

STANDARD_EPSILONS = (0.4, 0.2, 0.1, 0.05)

CONFIG_NAMES = ("default", "single_atom", "smoke")


def bundled_measures():
    """Named measures: one atom, two atoms with weights ``(sqrt .3, sqrt .7)``, three unit-gap atoms."""
    return {
        "dirac": AtomicMeasure.dirac(),
        "two-atom": AtomicMeasure(("0", "1"), (math.sqrt(0.3), math.sqrt(0.7))),
        "three-atom": AtomicMeasure(("0", "1", "2"), (1.0, 2.0, 3.0)),
    }


def weak_limit_test_function():
    """Raised cosine over the three-atom measure, peaked at its middle atom."""
    return RaisedCosine(center=1.0, half_width=2.0)


def config_path(name="default"):
    if name not in CONFIG_NAMES:
        raise KeyError(f"no bundled config {name!r}; available: {', '.join(CONFIG_NAMES)}")
    return resources.files("harrisflow") / "data" / f"{name}.yaml"
