"""Pure-numpy attention kernel, the fallback when the compiled one is absent.

Semantics shared with the compiled kernel: for each query row q_c, softmax
over all memory rows m of -||q_c - k_m||^2 / T, then the weighted mean of
the memory values.  Outputs are therefore convex combinations of `values`.
"""

from __future__ import annotations

import numpy as np


def attend(
    query: np.ndarray, keys: np.ndarray, values: np.ndarray, temperature: float
) -> np.ndarray:
    q = np.asarray(query, dtype=np.float64)
    k = np.asarray(keys, dtype=np.float64)
    v = np.asarray(values, dtype=np.float64)
    d2 = ((q[:, None, :] - k[None, :, :]) ** 2).sum(axis=2)
    logits = -d2 / temperature
    logits -= logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    return (w @ v) / w.sum(axis=1)
