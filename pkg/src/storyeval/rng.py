"""Deterministic random-number plumbing.

A run owns a single root seed.  Every consumer (parameter init, dropout,
data shuffling, ...) gets its own independent stream derived from that
seed plus a stable name, so adding a new consumer never perturbs the
streams of existing ones.
"""

import hashlib

import numpy as np


def stream(seed: int, name: str) -> np.random.Generator:
    """Return an independent generator for ``name`` derived from ``seed``."""
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    salt = int.from_bytes(digest[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, salt]))
