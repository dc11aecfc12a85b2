"""Counter-based random substreams for reproducible Monte Carlo.

Every stochastic routine in this package draws from a generator obtained
through :func:`substream`, keyed by the master seed plus a structural key
(grid row, trial index, ...).  Streams are independent of execution order,
so a sweep partitioned across any number of workers reproduces the
single-worker output bit for bit.
"""

from __future__ import annotations

import numpy as np


def substream(master_seed: int, *key: int) -> np.random.Generator:
    """Return a Generator for the substream identified by ``key``.

    The same (master_seed, key) pair always yields an identical stream,
    and distinct keys yield statistically independent streams.
    """
    if not 0 <= int(master_seed) < 2**64:
        raise ValueError(f"master seed must be an unsigned 64-bit integer, got {master_seed}")
    ss = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))
