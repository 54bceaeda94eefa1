"""
Counter-based random streams

Every stochastic component draws from numpy's Philox generator keyed by a
SeedSequence built from the user seed plus integer stream ids, so repetition
i of a run always sees the same numbers regardless of scheduling.
"""

import numpy as np

U64_MAX = 2 ** 64 - 1


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    """
    Build an independent generator for one stream

    Args:
        seed: 64-bit user seed
        *stream: Non-negative stream ids, e.g. (rep_index,) or (grid_index, trial)

    Returns:
        Philox-backed numpy Generator
    """
    if not 0 <= int(seed) <= U64_MAX:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    entropy = [int(seed)] + [int(s) for s in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
