"""Edit-distance DP kernels.

Two interchangeable backends fill the same integer DP matrix:

* ``numba`` -- the classic nested loop, JIT-compiled (default when numba
  imports cleanly);
* ``numpy`` -- a row-vectorized fill using the prefix-minimum trick for
  the insertion recurrence.

Select explicitly with ``ENDPOINT_RT_KERNELS=numba|numpy``; anything else
is rejected at import.  Both backends produce bit-identical matrices, so
backend choice never changes a result (``benchmarks/bench_kernels.py``
compares their speed).  The backtrace that turns a matrix into
substitution/deletion/insertion counts is shared and resolves ties in a
fixed order: substitution, then deletion, then insertion.
"""

from __future__ import annotations

import os

import numpy as np

try:  # pragma: no cover - exercised implicitly by backend selection
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        if args and callable(args[0]):
            return args[0]
        return wrap


_ENV_FLAG = "ENDPOINT_RT_KERNELS"


def _select_backend() -> str:
    choice = os.environ.get(_ENV_FLAG, "").strip().lower()
    if choice in ("numba", "numpy"):
        if choice == "numba" and not _HAVE_NUMBA:
            raise RuntimeError(
                f"{_ENV_FLAG}=numba requested but numba is not importable"
            )
        return choice
    if choice:
        raise RuntimeError(
            f"unknown {_ENV_FLAG}={choice!r}; expected 'numba' or 'numpy'"
        )
    return "numba" if _HAVE_NUMBA else "numpy"


BACKEND = _select_backend()


@njit(cache=True)
def _edit_matrix_numba(a: np.ndarray, b: np.ndarray) -> np.ndarray:  # pragma: no cover
    n = a.shape[0]
    m = b.shape[0]
    dp = np.empty((n + 1, m + 1), dtype=np.int64)
    for j in range(m + 1):
        dp[0, j] = j
    for i in range(1, n + 1):
        dp[i, 0] = i
        ai = a[i - 1]
        for j in range(1, m + 1):
            cost = 0 if ai == b[j - 1] else 1
            best = dp[i - 1, j - 1] + cost
            if dp[i - 1, j] + 1 < best:
                best = dp[i - 1, j] + 1
            if dp[i, j - 1] + 1 < best:
                best = dp[i, j - 1] + 1
            dp[i, j] = best
    return dp


def _edit_matrix_numpy(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = a.shape[0]
    m = b.shape[0]
    dp = np.empty((n + 1, m + 1), dtype=np.int64)
    dp[0] = np.arange(m + 1)
    cols = np.arange(m + 1)
    for i in range(1, n + 1):
        prev = dp[i - 1]
        sub = prev[:-1] + (b != a[i - 1])
        dele = prev[1:] + 1
        base = np.empty(m + 1, dtype=np.int64)
        base[0] = i
        np.minimum(sub, dele, out=base[1:])
        # dp[i, j] = min_{k<=j} (base[k] + j - k): prefix minimum of base[k]-k
        dp[i] = np.minimum.accumulate(base - cols) + cols
    return dp


def edit_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Full unit-cost edit-distance DP matrix for int id sequences."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    if BACKEND == "numba":
        return _edit_matrix_numba(a, b)
    return _edit_matrix_numpy(a, b)


def edit_distance_counts(a: np.ndarray, b: np.ndarray) -> tuple[int, int, int, int]:
    """Edit distance of ``b`` against reference ``a``, with operation counts.

    Returns ``(distance, substitutions, deletions, insertions)``; the
    backtrace prefers substitution over deletion over insertion when costs
    tie, so counts are deterministic (distance is unique regardless).
    """
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    dp = edit_matrix(a, b)
    i, j = a.shape[0], b.shape[0]
    subs = dels = ins = 0
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dp[i, j] == dp[i - 1, j - 1] + (a[i - 1] != b[j - 1]):
            if a[i - 1] != b[j - 1]:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and dp[i, j] == dp[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return int(dp[a.shape[0], b.shape[0]]), subs, dels, ins
