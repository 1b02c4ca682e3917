"""Experiment configuration files.

One YAML file describes a whole run::

    mollifier: {shape: standard-bump, support_radius: 1.0}
    measure:
      - {atom: "0", weight: 0.5477225575051661}
      - {atom: "1", weight: 0.8366600265340756}
    epsilon_list: [0.4, 0.2, 0.1, 0.05]
    flow:
      start_points: [0.0, 0.5]
      horizon: 1.0
      time_step: 1.0e-4
      scheme: harris-cholesky
    replicas: 10000
    master_seed: 20261014

Every field is validated; errors name the field path and the line it sits
on. Unknown fields are rejected. See ``data/default.yaml`` for the full,
commented field list.
"""
from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from fractions import Fraction

import yaml

from .flow import SCHEMES, FlowConfig
from .kernel import SHAPES, Mollifier
from .measure import AtomicMeasure

__all__ = ["ConfigError", "ExperimentConfig", "load_config", "parse_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field path."""

    def __init__(self, path, message, line=None):
        self.path = path
        self.line = line
        where = path or "<root>"
        if line is not None:
            where = f"line {line}: {where}"
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class KernelTableSpec:
    z_min: float = -2.0
    z_max: float = 2.0
    z_count: int = 81


@dataclass(frozen=True)
class ExperimentConfig:
    mollifier_shape: str
    support_radius: float
    measure: tuple  # ((Fraction atom, float weight), ...)
    epsilon_list: tuple
    flow: FlowConfig
    replicas: int
    master_seed: int
    eta: float | None = None
    probe_times: tuple | None = None
    output_dir: str = "out"
    dump_paths: bool = False
    common_random_numbers: bool = True
    kernel_table: KernelTableSpec = field(default_factory=KernelTableSpec)

    def build_mollifier(self):
        return Mollifier(self.mollifier_shape, self.support_radius)

    def build_measure(self):
        return AtomicMeasure(tuple(a for a, _ in self.measure), tuple(w for _, w in self.measure))

    @property
    def resolved_eta(self):
        if self.eta is not None:
            return self.eta
        u = self.flow.start_points
        return 0.02 * (u[-1] - u[0])

    @property
    def resolved_probe_times(self):
        if self.probe_times is not None:
            return self.probe_times
        T = self.flow.horizon
        return (T / 4, T / 2, T)

    def to_dict(self):
        f = self.flow
        return {
            "mollifier": {"shape": self.mollifier_shape, "support_radius": self.support_radius},
            "measure": [{"atom": str(a), "weight": w} for a, w in self.measure],
            "epsilon_list": list(self.epsilon_list),
            "flow": {
                "start_points": list(f.start_points),
                "horizon": f.horizon,
                "time_step": f.time_step,
                "scheme": f.scheme,
                "sheet_space_step": f.sheet_space_step,
                "bridge_refinement": f.bridge_refinement,
                "record_stride": f.record_stride,
            },
            "replicas": self.replicas,
            "master_seed": self.master_seed,
            "eta": self.eta,
            "probe_times": None if self.probe_times is None else list(self.probe_times),
            "output_dir": self.output_dir,
            "dump_paths": self.dump_paths,
            "common_random_numbers": self.common_random_numbers,
            "kernel_table": {
                "z_min": self.kernel_table.z_min,
                "z_max": self.kernel_table.z_max,
                "z_count": self.kernel_table.z_count,
            },
        }

    def to_yaml(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self):
        """SHA-256 of the canonical JSON form of every field."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# -- parsing ---------------------------------------------------------------

def _line_map(node, path="", out=None):
    out = {} if out is None else out
    out[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            key = str(k.value)
            sub = f"{path}.{key}" if path else key
            out[sub] = k.start_mark.line + 1
            _line_map(v, sub, out)
            out[sub] = k.start_mark.line + 1
    elif isinstance(node, yaml.SequenceNode):
        for i, v in enumerate(node.value):
            _line_map(v, f"{path}[{i}]", out)
    return out


class _Reader:
    def __init__(self, lines):
        self.lines = lines

    def fail(self, path, message):
        line = self.lines.get(path)
        parent = path
        while line is None and parent:
            parent = re.sub(r"(\.[^.\[]+|\[\d+\])$", "", parent)
            line = self.lines.get(parent)
        raise ConfigError(path, message, line)

    def mapping(self, data, path, allowed, required=()):
        if not isinstance(data, dict):
            self.fail(path, f"expected a mapping, got {type(data).__name__}")
        for key in data:
            if key not in allowed:
                sub = f"{path}.{key}" if path else str(key)
                self.fail(sub, f"unknown field {key!r}; allowed: {', '.join(allowed)}")
        for key in required:
            if key not in data:
                self.fail(path, f"missing required field {key!r}")
        return data

    def real(self, value, path, positive=False, allow_none=False):
        if value is None and allow_none:
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, f"expected a number, got {value!r}")
        value = float(value)
        if not math.isfinite(value):
            self.fail(path, f"expected a finite number, got {value!r}")
        if positive and not value > 0:
            self.fail(path, f"must be positive, got {value!r}")
        return value

    def integer(self, value, path, minimum=None):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, f"expected an integer, got {value!r}")
        if minimum is not None and value < minimum:
            self.fail(path, f"must be at least {minimum}, got {value}")
        return value

    def boolean(self, value, path):
        if not isinstance(value, bool):
            self.fail(path, f"expected true or false, got {value!r}")
        return value

    def sequence(self, value, path, allow_none=False):
        if value is None and allow_none:
            return None
        if not isinstance(value, list):
            self.fail(path, f"expected a list, got {type(value).__name__}")
        return value


_TOP = ("mollifier", "measure", "epsilon_list", "flow", "replicas", "master_seed", "eta",
        "probe_times", "output_dir", "dump_paths", "common_random_numbers", "kernel_table")
_FLOW = ("start_points", "horizon", "time_step", "scheme", "sheet_space_step",
         "bridge_refinement", "record_stride")


def parse_config(text):
    """Parse YAML text into an :class:`ExperimentConfig`."""
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError("", f"not valid YAML: {exc}", None if mark is None else mark.line + 1) from None
    if node is None:
        raise ConfigError("", "empty configuration")
    rd = _Reader(_line_map(node))
    rd.mapping(data, "", _TOP, required=("mollifier", "measure", "epsilon_list", "flow", "replicas", "master_seed"))

    mol = rd.mapping(data["mollifier"], "mollifier", ("shape", "support_radius"), required=("shape",))
    shape = mol["shape"]
    if shape not in SHAPES:
        rd.fail("mollifier.shape", f"unknown shape {shape!r}; expected one of {', '.join(SHAPES)}")
    radius = rd.real(mol.get("support_radius", 1.0), "mollifier.support_radius", positive=True)

    atoms = rd.sequence(data["measure"], "measure")
    if not atoms:
        rd.fail("measure", "needs at least one atom")
    measure = []
    seen = set()
    for i, entry in enumerate(atoms):
        p = f"measure[{i}]"
        rd.mapping(entry, p, ("atom", "weight"), required=("atom", "weight"))
        raw = entry["atom"]
        if isinstance(raw, bool) or not isinstance(raw, (str, int)):
            rd.fail(f"{p}.atom", f"expected a rational string like \"p/q\", got {raw!r}")
        try:
            atom = Fraction(str(raw))
        except (ValueError, ZeroDivisionError):
            rd.fail(f"{p}.atom", f"not a rational number: {raw!r}")
        if atom in seen:
            rd.fail(f"{p}.atom", f"duplicate atom {atom}")
        seen.add(atom)
        weight = rd.real(entry["weight"], f"{p}.weight")
        if not weight > 0:
            rd.fail(f"{p}.weight", f"weight must be positive, got {weight!r}")
        measure.append((atom, weight))

    eps = rd.sequence(data["epsilon_list"], "epsilon_list")
    if not eps:
        rd.fail("epsilon_list", "needs at least one epsilon")
    eps = tuple(rd.real(e, f"epsilon_list[{i}]", positive=True) for i, e in enumerate(eps))
    for i in range(1, len(eps)):
        if not eps[i] < eps[i - 1]:
            rd.fail(f"epsilon_list[{i}]", "epsilon_list must be strictly decreasing")

    fl = rd.mapping(data["flow"], "flow", _FLOW, required=("start_points", "horizon"))
    starts = rd.sequence(fl["start_points"], "flow.start_points")
    starts = tuple(rd.real(u, f"flow.start_points[{i}]") for i, u in enumerate(starts))
    horizon = rd.real(fl["horizon"], "flow.horizon", positive=True)
    time_step = rd.real(fl.get("time_step"), "flow.time_step", positive=True, allow_none=True)
    scheme = fl.get("scheme", "harris-cholesky")
    if scheme not in SCHEMES:
        rd.fail("flow.scheme", f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    h = rd.real(fl.get("sheet_space_step"), "flow.sheet_space_step", positive=True, allow_none=True)
    bridge = rd.boolean(fl.get("bridge_refinement", True), "flow.bridge_refinement")
    stride = rd.integer(fl.get("record_stride", 1), "flow.record_stride", minimum=1)
    try:
        flow = FlowConfig(starts, horizon, time_step, scheme, h, bridge, stride)
    except ValueError as exc:
        # blame the field the message mentions first
        msg = str(exc)
        hits = [(msg.find(k), k) for k in _FLOW if k in msg]
        rd.fail(f"flow.{min(hits)[1]}" if hits else "flow", msg)

    replicas = rd.integer(data["replicas"], "replicas", minimum=0)
    seed = rd.integer(data["master_seed"], "master_seed", minimum=0)
    if seed >= 2**64:
        rd.fail("master_seed", "must fit in 64 bits")
    eta = rd.real(data.get("eta"), "eta", positive=True, allow_none=True)
    probes = rd.sequence(data.get("probe_times"), "probe_times", allow_none=True)
    if probes is not None:
        probes = tuple(rd.real(t, f"probe_times[{i}]", positive=True) for i, t in enumerate(probes))
    # the defaults (T/4, T/2, T) must land on the recorded grid as well
    for i, t in enumerate(probes or (horizon / 4, horizon / 2, horizon)):
        where = f"probe_times[{i}]" if probes is not None else "flow.record_stride"
        if t > horizon * (1 + 1e-12):
            rd.fail(where, f"probe time {t} beyond the horizon {horizon}")
        if not any(abs(t - s) <= 1e-9 * max(1.0, t) for s in flow.times):
            rd.fail(where, f"probe time {t} is not on the recorded grid")
    out_dir = data.get("output_dir", "out")
    if not isinstance(out_dir, str) or not out_dir:
        rd.fail("output_dir", "expected a non-empty path string")
    dump = rd.boolean(data.get("dump_paths", False), "dump_paths")
    crn = rd.boolean(data.get("common_random_numbers", True), "common_random_numbers")

    kt = data.get("kernel_table", {}) or {}
    rd.mapping(kt, "kernel_table", ("z_min", "z_max", "z_count"))
    spec = KernelTableSpec(
        rd.real(kt.get("z_min", -2.0), "kernel_table.z_min"),
        rd.real(kt.get("z_max", 2.0), "kernel_table.z_max"),
        rd.integer(kt.get("z_count", 81), "kernel_table.z_count", minimum=1),
    )
    if spec.z_max < spec.z_min:
        rd.fail("kernel_table.z_max", "must not be below z_min")

    return ExperimentConfig(shape, radius, tuple(measure), eps, flow, replicas, seed, eta, probes,
                            out_dir, dump, crn, spec)


def load_config(path):
    with open(path) as fh:
        return parse_config(fh.read())
