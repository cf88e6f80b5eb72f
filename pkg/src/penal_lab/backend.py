"""Kernel backend selection and worker-thread control.

The hot path kernels exist twice: a numba @njit version and a vectorized
pure-numpy twin implementing the same per-path arithmetic.  The active
backend is chosen by the PENAL_LAB_BACKEND environment variable ("numba",
the default, or "numpy").  Worker count only affects how paths are split
across threads, never the per-path streams, so results are backend- and
worker-invariant up to transcendental-function rounding.
"""

from __future__ import annotations

import os

ENV_BACKEND = "PENAL_LAB_BACKEND"
ENV_WORKERS = "PENAL_LAB_WORKERS"

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    HAVE_NUMBA = False


def selected_backend() -> str:
    """Return "numba" or "numpy" after consulting the env flag."""
    mode = os.environ.get(ENV_BACKEND, "numba").strip().lower()
    if mode not in ("numba", "numpy"):
        raise ValueError(f"{ENV_BACKEND} must be 'numba' or 'numpy', got {mode!r}")
    if mode == "numba" and not HAVE_NUMBA:
        return "numpy"
    return mode


def set_workers(n: int | None) -> int:
    """Set the numba thread count, best effort; returns the count in use.

    Counts above the launch-time maximum are clamped (results do not
    depend on the thread count by construction).
    """
    if n is None:
        env = os.environ.get(ENV_WORKERS, "").strip()
        n = int(env) if env else 0
    if n <= 0 or not HAVE_NUMBA:
        return numba.get_num_threads() if HAVE_NUMBA else 1
    n_max = numba.config.NUMBA_NUM_THREADS
    n_use = max(1, min(int(n), n_max))
    numba.set_num_threads(n_use)
    return n_use
