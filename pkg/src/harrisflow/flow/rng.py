"""Reproducible per-replica random streams.

Every replica owns its streams, derived from the master seed alone:

* ``SeedSequence(master_seed, spawn_key=(group, replica, stream))`` seeds a
  PCG64 generator per ``stream`` (:data:`NORMALS`, :data:`UNIFORMS`). This is
  numpy's splittable spawn construction, so streams of distinct
  ``(group, replica, stream)`` triples are independent.
* The Wiener-sheet increment of cell ``c`` at step ``k`` is addressed by the
  counter ``m = k * n_cells + c`` and computed as a SplitMix64 output pair
  ``(2m, 2m + 1)`` under the replica's :data:`SHEET` key, mapped to a
  standard normal by Box-Muller. Cells can therefore be generated lazily and
  in any order, and always take the same value.

``group`` separates experiment rows that must not share random numbers; rows
that deliberately share them (common random numbers) use the same group.
"""
from __future__ import annotations

import numpy as np

__all__ = [
    "NORMALS",
    "UNIFORMS",
    "SHEET",
    "NULL_GROUP",
    "replica_seed_sequence",
    "replica_generators",
    "sheet_keys",
    "splitmix64",
    "counter_normals",
]

NORMALS = 0
UNIFORMS = 1
SHEET = 2

NULL_GROUP = 2**31 - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_TWO_PI = 2.0 * np.pi
_INV_2_53 = 2.0**-53


def replica_seed_sequence(master_seed, replica, stream, group=0):
    return np.random.SeedSequence(int(master_seed), spawn_key=(int(group), int(replica), int(stream)))


def replica_generators(master_seed, replicas, stream, group=0):
    return [
        np.random.Generator(np.random.PCG64(replica_seed_sequence(master_seed, r, stream, group)))
        for r in replicas
    ]


def sheet_keys(master_seed, replicas, group=0):
    return np.array(
        [replica_seed_sequence(master_seed, r, SHEET, group).generate_state(1, np.uint64)[0] for r in replicas],
        dtype=np.uint64,
    )


def splitmix64(key, counter):
    """SplitMix64 output number ``counter`` of the stream seeded with ``key``."""
    with np.errstate(over="ignore"):
        z = key + (counter + np.uint64(1)) * _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _MIX1
        z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def counter_normals(key, counter):
    """Standard normals addressed by ``(key, counter)``; arrays broadcast."""
    key = np.asarray(key, dtype=np.uint64)
    m = np.asarray(counter, dtype=np.uint64) * np.uint64(2)
    u1 = ((splitmix64(key, m) >> np.uint64(11)).astype(np.float64) + 1.0) * _INV_2_53
    u2 = (splitmix64(key, m + np.uint64(1)) >> np.uint64(11)).astype(np.float64) * _INV_2_53
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)
