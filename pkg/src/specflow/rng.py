"""Counter-based random streams: one reproducible substream per sample index."""

import numpy as np


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Generator for substream ``index`` of ``seed``; independent of worker count."""
    key = (int(seed) & ((1 << 64) - 1)) | ((int(index) & ((1 << 64) - 1)) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def random_limbs(gen: np.random.Generator, count: int) -> np.ndarray:
    """``(4, count)`` array of uniform 30-bit limbs, i.e. uniform 120-bit points."""
    return gen.integers(0, 1 << 30, size=(4, count), dtype=np.int64)
