"""Command line entry point.

    harrisflow validate CONFIG        property suite -> validate.csv
    harrisflow kernel-table CONFIG    (epsilon, z, gamma_eps, gamma0) -> kernel_table.csv
    harrisflow simulate CONFIG        per-epsilon ensemble summary -> simulate.csv
    harrisflow converge CONFIG        convergence report -> report.csv, manifest.csv

Exit codes: 0 success, 1 validation or experiment failure, 2 config error.
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import platform
import sys
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .checks import results_csv, run_checks
from .config import ConfigError, load_config
from .covariance import SmoothedKernel
from .flow import SimulationError, simulate
from .lab import build_report, near_coalescence_prob

log = logging.getLogger("harrisflow")

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _out_dir(cfg, override):
    path = Path(override or cfg.output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    log.info("wrote %s", path)


def _kernels(cfg):
    mol = cfg.build_mollifier()
    nu = cfg.build_measure()
    return [SmoothedKernel.build(mol, e, nu) for e in cfg.epsilon_list]


def cmd_validate(cfg, out):
    results = run_checks(cfg.build_mollifier(), cfg.build_measure(), cfg.epsilon_list, seed=cfg.master_seed)
    _write(out / "validate.csv", results_csv(results))
    failed = [r for r in results if not r.passed]
    for r in failed:
        log.error("check %s (%s) failed: value %r, tolerance %r", r.check, r.subject, r.value, r.tolerance)
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return EXIT_FAILED if failed else EXIT_OK


def kernel_table_rows(cfg):
    nu = cfg.build_measure()
    spec = cfg.kernel_table
    grid = {float(z) for z in np.linspace(spec.z_min, spec.z_max, spec.z_count)}
    exact = {float(d): d for d in nu.support_D()}
    grid |= set(exact)
    rows = []
    for sk in _kernels(cfg):
        for z in sorted(grid):
            g0 = nu.gamma0(exact[z]) if z in exact else nu.gamma0_float(z)
            rows.append((sk.epsilon, z, float(sk.gamma(z)), g0))
    return rows


def cmd_kernel_table(cfg, out):
    lines = ["epsilon,z,gamma_eps,gamma0"]
    lines += [",".join(repr(float(v)) for v in row) for row in kernel_table_rows(cfg)]
    _write(out / "kernel_table.csv", "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(cfg, out, workers):
    if cfg.replicas == 0:
        log.error("replicas = 0: nothing to simulate")
        return EXIT_FAILED
    flow = cfg.flow
    targets = [(None, None)] if flow.scheme == "arratia" else [(sk.epsilon, sk) for sk in _kernels(cfg)]
    header = ["epsilon", "scheme", "replicas", "crossing_rate", "coalesced_fraction", "near_coalescence_prob"]
    header += [f"mean_x{i + 1}_T" for i in range(flow.n)] + [f"var_x{i + 1}_T" for i in range(flow.n)]
    header.append("status")
    rows = []
    failures = 0
    for eps, sk in targets:
        label = "inf" if eps is None else repr(eps)
        try:
            ens = simulate(flow, cfg.replicas, cfg.master_seed, sk=sk, workers=workers)
        except SimulationError as exc:
            failures += 1
            rows.append([label, flow.scheme, cfg.replicas] + ["nan"] * (len(header) - 4) + [f"failed: {exc}"])
            continue
        xt = ens.final()
        coal = ens.coalesced_by().mean() if flow.n > 1 else math.nan
        near = near_coalescence_prob(ens, cfg.resolved_eta)[0] if flow.n > 1 else math.nan
        vals = [ens.crossing_rate, coal, near, *xt.mean(axis=0), *xt.var(axis=0, ddof=1)]
        rows.append([label, flow.scheme, cfg.replicas] + [repr(float(v)) for v in vals] + ["ok"])
        if cfg.dump_paths:
            ens.write_csv(out / f"paths_eps{label}.csv")
    with open(out / "simulate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return EXIT_FAILED if failures == len(targets) else EXIT_OK


def manifest_rows(cfg):
    return [
        ("config_sha256", cfg.digest()),
        ("master_seed", str(cfg.master_seed)),
        ("replicas", str(cfg.replicas)),
        ("harrisflow", __version__),
        ("numpy", np.__version__),
        ("scipy", scipy.__version__),
        ("pyyaml", yaml.__version__),
        ("python", platform.python_version()),
    ]


def cmd_converge(cfg, out, workers):
    if cfg.replicas == 0:
        log.error("replicas = 0: the report would be empty")
        return EXIT_FAILED
    report = build_report(
        _kernels(cfg), cfg.flow, cfg.replicas, cfg.master_seed,
        eta=cfg.resolved_eta, probe_times=cfg.resolved_probe_times,
        common_random_numbers=cfg.common_random_numbers, workers=workers,
    )
    _write(out / "report.csv", report.to_csv())
    with open(out / "manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(manifest_rows(cfg))
    for r in report.rows:
        if not r.ok:
            log.error("epsilon %r: %s", r.epsilon, r.status)
    return EXIT_FAILED if not any(r.ok for r in report.rows) else EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="harrisflow", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("validate", "kernel-table", "simulate", "converge"):
        sp = sub.add_parser(name)
        sp.add_argument("config", help="experiment YAML file")
        sp.add_argument("-o", "--output-dir", help="override the config's output_dir")
        if name in ("simulate", "converge"):
            sp.add_argument("-j", "--workers", type=int, default=1,
                            help="simulation processes (results do not depend on it)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"config error: cannot read {args.config}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = _out_dir(cfg, args.output_dir)
        if args.command == "validate":
            return cmd_validate(cfg, out)
        if args.command == "kernel-table":
            return cmd_kernel_table(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out, args.workers)
        return cmd_converge(cfg, out, args.workers)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
