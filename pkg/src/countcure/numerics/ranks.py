"""Midrank assignment for the rank-based seasonality tests."""

from __future__ import annotations

import numpy as np

from ..errors import DomainError


def midranks(values) -> np.ndarray:
    """Ranks in [1, n] with ties sharing the average of the ranks they span.

    Sum of the output is always n(n+1)/2.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise DomainError("midranks expects a nonempty 1-d vector")
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=float)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        # positions i..j (0-based) share rank (i+1 + j+1) / 2
        ranks[order[i:j + 1]] = (i + j + 2) / 2.0
        i = j + 1
    return ranks
