"""Named random streams keyed by (base seed, replication, purpose).

Streams use the counter-based Philox generator seeded through ``SeedSequence``
so a replication's draws never depend on which worker runs it or in what order.
"""

from __future__ import annotations

import numpy as np

PURPOSES = {
    "data": 0,
    "cvtmle": 1,
    "permutation": 2,
    "validate": 3,
}


def stream(base_seed: int, replication: int, purpose: str) -> np.random.Generator:
    try:
        tag = PURPOSES[purpose]
    except KeyError:
        raise ValueError(f"unknown stream purpose {purpose!r}; valid: {', '.join(PURPOSES)}") from None
    seq = np.random.SeedSequence(entropy=int(base_seed), spawn_key=(int(replication), tag))
    return np.random.Generator(np.random.Philox(seq))
