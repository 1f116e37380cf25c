"""Timing comparison of the edit-distance kernel backends.

Run directly::

    python benchmarks/bench_kernels.py [--sizes 50,200,800] [--repeats 5]

Builds random word sequences, times ``edit_matrix`` under both backends
(the numba path is warmed first so compilation is not measured), and
checks that the two backends return identical matrices on every case.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from endpoint_rt._kernels import _edit_matrix_numpy, edit_matrix


def _random_pair(rng: np.random.Generator, n: int) -> tuple[list[int], list[int]]:
    a = rng.integers(0, 20, size=n).tolist()
    b = rng.integers(0, 20, size=n).tolist()
    return a, b


def _time(fn, a, b, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(a, b)
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="50,200,800")
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(args.seed)

    from endpoint_rt import _kernels

    _edit_matrix_numba = _kernels._edit_matrix_numba if _kernels._HAVE_NUMBA else None

    print(f"{'n':>6} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>8}")
    for n in sizes:
        a, b = _random_pair(rng, n)
        a_arr = np.asarray(a, dtype=np.int64)
        b_arr = np.asarray(b, dtype=np.int64)
        t_np = _time(_edit_matrix_numpy, a_arr, b_arr, args.repeats)
        if _edit_matrix_numba is not None:
            _edit_matrix_numba(a_arr, b_arr)  # warm the JIT cache
            t_nb = _time(_edit_matrix_numba, a_arr, b_arr, args.repeats)
            same = bool(
                np.array_equal(_edit_matrix_numpy(a_arr, b_arr), _edit_matrix_numba(a_arr, b_arr))
            )
            assert same, f"backend mismatch at n={n}"
            print(f"{n:>6} {t_np * 1e3:>12.3f} {t_nb * 1e3:>12.3f} {t_np / t_nb:>8.2f}x")
        else:
            print(f"{n:>6} {t_np * 1e3:>12.3f} {'n/a':>12} {'n/a':>8}")

    # dispatcher sanity: whatever backend is active matches pure numpy
    a, b = _random_pair(rng, 64)
    assert np.array_equal(
        edit_matrix(a, b), _edit_matrix_numpy(np.asarray(a), np.asarray(b))
    )
    print("active backend matches the numpy reference")


if __name__ == "__main__":
    main()
