"""
Replicate-level parallelism.

Workers are forked so closures (weights, innovation samplers) need not be
picklable; only indices and results cross the process boundary.  Results
come back in index order, so output does not depend on ``jobs``.
"""

import multiprocessing as mp

_TASK = None


def _call(i):
    return _TASK(i)


def parallel_map(func, count, jobs=1):
    """``[func(i) for i in range(count)]`` spread over ``jobs`` forked workers."""
    global _TASK
    jobs = max(1, int(jobs))
    if jobs == 1 or count <= 1 or "fork" not in mp.get_all_start_methods():
        return [func(i) for i in range(count)]
    _TASK = func
    try:
        with mp.get_context("fork").Pool(min(jobs, count)) as pool:
            return pool.map(_call, range(count), chunksize=1)
    finally:
        _TASK = None
