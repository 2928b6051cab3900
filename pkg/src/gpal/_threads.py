"""BLAS thread-pool control.

The kernel matrices here are small (hundreds of rows); multi-threaded BLAS
loses badly to single-threaded at that size, especially under container CPU
quotas.  Entry points (CLI, benchmark workers, service startup) call
`limit_blas_threads` so parallelism happens across realizations, not inside
factorizations.
"""

from __future__ import annotations

import os


def limit_blas_threads(n: int = 1) -> None:
    try:
        from threadpoolctl import threadpool_limits

        threadpool_limits(limits=n)
    except ImportError:
        # only effective if numpy has not loaded its BLAS yet
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, str(n))
