"""Deterministic seed derivation.

All randomness in the library flows through 64-bit integer seeds. Derived
streams (per-iteration repartitioning, per-sample Monte Carlo draws,
per-repeat runs) use a SHA-256 based mix of the base seed and an integer
tag, so runs are reproducible and any single iteration or sample can be
replayed in isolation.
"""

import hashlib

_DOMAIN = b"blockprec.seed.v1"

MAX_SEED = 2**64 - 1


def derive_seed(base_seed: int, *tags: int) -> int:
    """Derive a child 64-bit seed from ``base_seed`` and integer tags."""
    h = hashlib.sha256(_DOMAIN)
    h.update(int(base_seed).to_bytes(16, "little", signed=True))
    for tag in tags:
        h.update(int(tag).to_bytes(16, "little", signed=True))
    return int.from_bytes(h.digest()[:8], "little")
