"""Hot loops with a numba path and a pure-numpy path.

The backend is chosen once at import time.  Set ``HRSAE_BACKEND=numpy`` to
force the numpy path (numba is used by default when importable).  Both paths
consume the same pre-drawn random numbers, so they produce identical counts.
"""

from __future__ import annotations

import logging
import os

import numpy as np

__all__ = ["BACKEND", "rank_count", "rank_count_numpy", "rank_count_numba", "HAVE_NUMBA"]

logger = logging.getLogger(__name__)


def rank_count_numpy(values: np.ndarray, counts: np.ndarray) -> None:
    """Add one rank assignment per row of ``values`` into ``counts`` in place.

    ``counts[i, j]`` is incremented when unit ``i`` has rank ``j`` (0-based)
    in a row.  Ties go to the lower unit index (stable sort).
    """
    n_rows, n_units = values.shape
    order = np.argsort(values, axis=1, kind="stable")
    flat = order * n_units + np.arange(n_units)
    counts += np.bincount(flat.ravel(), minlength=n_units * n_units).reshape(n_units, n_units)


try:
    import numba

    logging.getLogger("numba").setLevel(logging.WARNING)

    @numba.njit(cache=True, nogil=True)
    def _scatter_ranks(values, order, counts):
        n_rows, n_units = order.shape
        for r in range(n_rows):
            row = values[r]
            idx = order[r]
            # quicksort leaves equal values in arbitrary order; restore index order
            j = 0
            while j < n_units - 1:
                k = j
                while k + 1 < n_units and row[idx[k + 1]] == row[idx[j]]:
                    k += 1
                if k > j:
                    for a in range(j + 1, k + 1):
                        cur = idx[a]
                        b = a - 1
                        while b >= j and idx[b] > cur:
                            idx[b + 1] = idx[b]
                            b -= 1
                        idx[b + 1] = cur
                j = k + 1
            for j in range(n_units):
                counts[idx[j], j] += 1

    def rank_count_numba(values: np.ndarray, counts: np.ndarray) -> None:
        """Same contract as :func:`rank_count_numpy`.

        numpy's (SIMD) quicksort does the sorting; the compiled part fixes
        tie order and scatters the counts.
        """
        order = np.argsort(values, axis=1)
        _scatter_ranks(values, order, counts)

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    rank_count_numba = None
    HAVE_NUMBA = False


def _select_backend() -> str:
    requested = os.environ.get("HRSAE_BACKEND", "").strip().lower()
    if requested == "numpy":
        return "numpy"
    if requested not in ("", "numba"):
        logger.warning("unknown HRSAE_BACKEND=%r, using default", requested)
    return "numba" if HAVE_NUMBA else "numpy"


BACKEND = _select_backend()
rank_count = rank_count_numba if BACKEND == "numba" else rank_count_numpy
