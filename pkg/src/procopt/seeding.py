"""Deterministic seed derivation for per-round / per-run RNG streams."""

import numpy as np


def derive_seed(base: int, stream: int) -> int:
    """Stable child seed for (base, stream); avoids correlated streams."""
    return int(np.random.SeedSequence((base, stream)).generate_state(1)[0])
