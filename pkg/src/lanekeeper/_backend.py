"""Kernel backend selection.

The hot inner loops (camera rendering, median filtering, segment
extraction) ship in two interchangeable implementations: numba-jitted
kernels and pure numpy/python fallbacks.  Selection:

* ``LANEKEEPER_NUMBA=0``  force the numpy fallback
* ``LANEKEEPER_NUMBA=1``  require numba (raise if unavailable)
* unset                   numba when importable, fallback otherwise

Both paths produce bit-identical output; ``benchmarks/bench_kernels.py``
compares their speed.
"""

import os

_flag = os.environ.get("LANEKEEPER_NUMBA", "").strip()

if _flag == "0":
    HAS_NUMBA = False
else:
    try:
        import numba  # noqa: F401

        HAS_NUMBA = True
    except ImportError:
        if _flag == "1":
            raise
        HAS_NUMBA = False


def active_backend() -> str:
    """Name of the kernel backend in use: 'numba' or 'numpy'."""
    return "numba" if HAS_NUMBA else "numpy"
