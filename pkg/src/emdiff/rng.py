"""Counter-based random streams.

Every Gaussian draw in the package comes from a Philox generator keyed by
``SeedSequence([seed, *keys])``.  Normals are produced by numpy's
``Generator.standard_normal`` (ziggurat method).  Reimplementations in other
languages can match the distributions, not the bit streams.
"""
from __future__ import annotations

import numpy as np

# stream tags
START = 0
STEP = 1
GRID = 2
DATA = 3
PROBE = 4


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Return an independent generator for ``(seed, *keys)``."""
    if seed < 0 or any(k < 0 for k in keys):
        raise ValueError("seed and keys must be non-negative integers")
    ss = np.random.SeedSequence([int(seed), *(int(k) for k in keys)])
    return np.random.Generator(np.random.Philox(ss))


def normal_rows(seed: int, keys: tuple, first: int, count: int, d: int) -> np.ndarray:
    """Rows ``first .. first+count-1`` of the Gaussian stream ``(seed, *keys)``.

    Row ``i`` depends only on ``(seed, keys, i)`` and not on ``count``, since
    the generator fills the output sequentially.
    """
    g = stream(seed, *keys)
    z = g.standard_normal((first + count, d))
    return z[first:]
