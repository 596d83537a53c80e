"""Named deterministic RNG streams derived from one master seed.

Each subsystem (gps, baro, detector, scan, ...) owns its own stream so the
consumption order of one cannot perturb another. String seeds go through
random's sha512 path, which is stable across platforms and runs.
"""

from __future__ import annotations

import random


def stream(seed: int, label: str) -> random.Random:
    return random.Random(f"{seed}/{label}")


def poisson(rng: random.Random, lam: float) -> int:
    """Knuth sampler; fine for the small per-tick rates used here."""
    if lam <= 0.0:
        return 0
    limit = pow(2.718281828459045, -lam)
    k, p = 0, 1.0
    while True:
        p *= rng.random()
        if p <= limit:
            return k
        k += 1
