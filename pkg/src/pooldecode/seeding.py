"""Deterministic seed derivation.

Every random stream in the package is keyed by ``(root, label, index)``.
The mixing function is numpy's ``SeedSequence`` with the root seed as
entropy and ``(crc32(label), index)`` as the spawn key; the first 64-bit
word of its state is the child seed.  Child seeds therefore depend only on
their key, never on the order in which trials are scheduled.
"""

import zlib

import numpy as np

__all__ = ["derive_seed", "label_code"]

_MASK64 = (1 << 64) - 1


def label_code(label: str) -> int:
    return zlib.crc32(label.encode("utf-8"))


def derive_seed(root: int, label: str, index: int = 0) -> int:
    """Return the 64-bit child seed for stream ``label`` of trial ``index``."""
    if index < 0:
        raise ValueError(f"index must be nonnegative, got {index}")
    ss = np.random.SeedSequence(entropy=int(root) & _MASK64,
                                spawn_key=(label_code(label), int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])
