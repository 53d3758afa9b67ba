"""Kernel backend selection and shared random-stream plumbing.

At import time the compiled extension is preferred and the pure-Python
kernel is the fallback.  ``OPPSHUFFLE_KERNEL=python`` (or ``compiled``)
forces a backend, which the benchmark uses to compare the two.

Per-trial reproducibility: every trial gets its own PCG64 bit generator
derived from ``SeedSequence(seed, spawn_key=(trial_index,))``, so a trial
is a pure function of (seed, trial_index) no matter how trials are
scheduled across threads.
"""

from __future__ import annotations

import os

import numpy as np

from . import _pykernel

_FORCED = os.environ.get("OPPSHUFFLE_KERNEL", "")
if _FORCED not in ("", "compiled", "python"):
    raise ImportError(f"OPPSHUFFLE_KERNEL must be 'compiled' or 'python', got {_FORCED!r}")

if _FORCED == "python":
    _impl = _pykernel
    BACKEND = "python"
else:
    try:
        from . import _speedups as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _FORCED == "compiled":
            raise
        _impl = _pykernel
        BACKEND = "python"

markov_trial = _impl.markov_trial
pairs_trial = _impl.pairs_trial


def available_backends() -> dict:
    """Importable kernel modules keyed by backend name."""
    out = {"python": _pykernel}
    try:
        from . import _speedups

        out["compiled"] = _speedups
    except ImportError:
        pass
    return out


def trial_bit_generator(seed: int, trial_index: int) -> np.random.PCG64:
    """Independent, reproducible stream for one trial."""
    return np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(trial_index,)))


def row_cumulative(p: np.ndarray) -> np.ndarray:
    """Row-wise cumulative sums with the last column pinned to exactly 1.0.

    Pinning absorbs float round-off so the kernels' ``u < cum`` scan always
    terminates inside the row.
    """
    c = np.cumsum(np.ascontiguousarray(p, dtype=np.float64), axis=1)
    c[:, -1] = 1.0
    return c
