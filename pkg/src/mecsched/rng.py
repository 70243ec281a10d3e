"""Named random streams derived from a single master seed.

Every source of randomness in a run (workload draws, capability chains,
exploration, replay sampling, weight init) gets its own stream so that
changing one consumer never perturbs the others.
"""

from __future__ import annotations

import hashlib

import numpy as np


def stream(master_seed: int, *names: object) -> np.random.Generator:
    """Return an independent generator keyed by ``(master_seed, *names)``.

    Name parts may be strings or ints; the derivation is stable across
    processes and Python versions (sha256, not ``hash``).
    """
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF]
    for name in names:
        digest = hashlib.sha256(repr(name).encode("utf-8")).digest()
        entropy.append(int.from_bytes(digest[:8], "big"))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
