"""Keyed deterministic random streams.

Every random draw in the harness goes through a Philox4x64 counter-based
generator whose 128-bit key is derived by SHA-256 from the run seed plus a
label describing the draw (cell key, iteration number, query id, ...).
Independent labels give independent streams, so adding a language or running
iterations out of order never perturbs other draws, and results are
bit-identical across platforms.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_key(seed: int, *labels: object) -> np.ndarray:
    """128-bit Philox key from the seed and an arbitrary label tuple."""
    h = hashlib.sha256()
    h.update(str(int(seed)).encode("utf-8"))
    for label in labels:
        h.update(b"\x1f")
        h.update(str(label).encode("utf-8"))
    digest = h.digest()
    return np.frombuffer(digest[:16], dtype=np.uint64)


def keyed_rng(seed: int, *labels: object) -> np.random.Generator:
    """Generator over an independent Philox stream for (seed, labels)."""
    return np.random.Generator(np.random.Philox(key=derive_key(seed, *labels)))
