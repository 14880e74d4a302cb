"""Deterministic seed derivation and per-sample random streams.

Every random decision in the package flows from a single master seed
through named derivation paths, and per-sample noise comes from a
counter-based generator keyed by (derived seed, sample index). The noise
a sample receives therefore depends only on the key, never on how many
other samples were processed first.
"""

from __future__ import annotations

import numpy as np

__all__ = ["derive_seed", "sample_rng"]

_MASK64 = (1 << 64) - 1


def _as_entropy(part) -> int:
    if isinstance(part, str):
        return int.from_bytes(part.encode("utf-8"), "little")
    return int(part) & _MASK64


def derive_seed(master: int, *path) -> int:
    """Stable 64-bit sub-seed for a named purpose under a master seed.

    Path elements may be strings (purpose tags) or integers (pass or
    stage indices). Distinct paths give independent streams.
    """
    entropy = [_as_entropy(master)] + [_as_entropy(p) for p in path]
    ss = np.random.SeedSequence(entropy)
    return int(ss.generate_state(1, np.uint64)[0])


def sample_rng(seed: int, sample_index: int) -> np.random.Generator:
    """Generator keyed by (seed, sample index), independent of call order."""
    key = np.array([seed & _MASK64, int(sample_index) & _MASK64],
                   dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
