"""Hot inner loops, with a numba path and a pure-numpy fallback.

The numba path is used when numba imports and ``ANGIOSIM_DISABLE_NUMBA`` is
unset (or ``0``). Both paths share signatures; ``numpy_impl`` and
``numba_impl`` are always importable for cross-checks and benchmarks
(``numba_impl`` is ``None`` when numba is missing).
"""

import os

from . import _numpy as numpy_impl

_flag = os.environ.get("ANGIOSIM_DISABLE_NUMBA", "0").strip().lower()
DISABLED_BY_ENV = _flag not in ("", "0", "false", "no")

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is a hard dep in practice
    numba_impl = None

USE_NUMBA = numba_impl is not None and not DISABLED_BY_ENV
active = numba_impl if USE_NUMBA else numpy_impl

hash_uniforms = active.hash_uniforms
hash_normals = active.hash_normals
interp_nodes = active.interp_nodes
scatter_bump = active.scatter_bump
segment_density = active.segment_density
thomas_lines = active.thomas_lines
exp_martingale_sup = active.exp_martingale_sup
dominating_trials = active.dominating_trials

__all__ = [
    "USE_NUMBA",
    "active",
    "numpy_impl",
    "numba_impl",
    "hash_uniforms",
    "hash_normals",
    "interp_nodes",
    "scatter_bump",
    "segment_density",
    "thomas_lines",
    "exp_martingale_sup",
    "dominating_trials",
]
