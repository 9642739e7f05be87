"""Counter-based random streams keyed by (seed, stream id, ...)."""

from __future__ import annotations

import numpy as np

# stream ids used across the package
SIGNAL = 0
DESIGN = 1
NOISE = 2


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """Philox generator for the key (seed, *stream).

    Each key maps to an independent stream, so a replicate's draws do not
    depend on which worker runs it or in what order.
    """
    key = [int(seed) & 0xFFFFFFFFFFFFFFFF, *(int(s) for s in stream)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))
