"""Deterministic random-number plumbing.

All stochastic components draw from counter-based Philox streams keyed by a
64-bit master seed. Replica streams are derived with ``SeedSequence`` spawn
keys, so results never depend on thread scheduling or on how many replicas
run in one process.
"""

from __future__ import annotations

import numpy as np

__all__ = ["master_rng", "replica_rng", "replica_seed"]


def master_rng(seed: int) -> np.random.Generator:
    """Philox generator for a top-level seed."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))


def replica_seed(seed: int, index: int) -> int:
    """Stable 64-bit sub-seed for replica ``index`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def replica_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for replica ``index`` of ``seed``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(index),))
    return np.random.Generator(np.random.Philox(ss))
