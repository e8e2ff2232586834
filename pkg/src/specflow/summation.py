"""Order-independent summation helpers.

``exact_sum`` is correctly rounded (so chunked sums combine to the same value
whatever the chunking), and ``compensated_cumsum`` keeps partial sums of long
arrays accurate by adding exactly-summed block offsets to short in-block
cumulative sums.
"""

import math

import numpy as np

BLOCK = 256


def exact_sum(values) -> float:
    arr = np.asarray(values, dtype=np.float64)
    return math.fsum(arr.tolist())


def compensated_cumsum(terms) -> np.ndarray:
    """Partial sums ``[0, t0, t0+t1, ...]`` (length ``len(terms)+1``)."""
    t = np.asarray(terms, dtype=np.float64)
    n = t.size
    out = np.empty(n + 1)
    out[0] = 0.0
    if n == 0:
        return out
    nb = -(-n // BLOCK)
    padded = np.zeros(nb * BLOCK)
    padded[:n] = t
    blocks = padded.reshape(nb, BLOCK)
    inner = np.cumsum(blocks, axis=1)
    # running block offsets with Neumaier compensation
    offsets = np.empty(nb)
    total = 0.0
    comp = 0.0
    for k, b in enumerate(inner[:, -1].tolist()):
        offsets[k] = total + comp
        t2 = total + b
        if abs(total) >= abs(b):
            comp += (total - t2) + b
        else:
            comp += (b - t2) + total
        total = t2
    out[1:] = (inner + offsets[:, None]).reshape(-1)[:n]
    return out
