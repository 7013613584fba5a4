"""Counter-based random streams.

Every tip owns a stream keyed by ``(master_seed, tip_id)``; a draw is addressed
by ``(step, purpose, j)``. Nothing is stateful, so the draws a tip sees do not
depend on how many other tips exist, on iteration order, or on worker count.
"""

import numpy as np

from . import kernels

# purpose tags, 8 bits each
EM_NOISE = 1
TIP_BRANCH = 2
VESSEL_CANDIDATE = 3
VESSEL_LOCATION = 4
VESSEL_ACCEPT = 5
ANASTOMOSIS = 6
OFFSPRING = 7
INITIAL = 8

_MAX_J = 1 << 16


def counter(step, purpose, j=0):
    """Pack a draw address into a 64-bit counter."""
    if not 0 <= j < _MAX_J:
        raise ValueError(f"draw index {j} outside [0, {_MAX_J})")
    return (int(step) << 24) | (int(purpose) << 16) | int(j)


def uniforms(seed, streams, step, purpose, n=1):
    streams = np.ascontiguousarray(streams, dtype=np.int64)
    return kernels.hash_uniforms(np.uint64(seed), streams, np.uint64(counter(step, purpose)), n)


def normals(seed, streams, step, purpose, n=1):
    streams = np.ascontiguousarray(streams, dtype=np.int64)
    return kernels.hash_normals(np.uint64(seed), streams, np.uint64(counter(step, purpose)), n)


class HashStream:
    """Sequential view over one tip's stream at a fixed ``(step, purpose)``.

    Quacks like the slice of ``numpy.random.Generator`` that the samplers
    use (``standard_normal``, ``random``), so a sampler can take either.
    """

    def __init__(self, seed, stream, step, purpose):
        self.seed = int(seed)
        self.stream = np.array([stream], dtype=np.int64)
        self.step = step
        self.purpose = purpose
        self._j = 0

    def _take(self, n):
        if self._j + n > _MAX_J:
            raise RuntimeError("stream slot exhausted")
        base = counter(self.step, self.purpose, self._j)
        self._j += n + (n % 2)
        return base

    def standard_normal(self, size=None):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        n = int(np.prod(shape)) if shape else 1
        base = self._take(n)
        z = kernels.hash_normals(np.uint64(self.seed), self.stream, np.uint64(base), n)[0]
        return z.reshape(shape) if shape else float(z[0])

    def random(self, size=None):
        shape = () if size is None else (size if isinstance(size, tuple) else (size,))
        n = int(np.prod(shape)) if shape else 1
        base = self._take(n)
        u = kernels.hash_uniforms(np.uint64(self.seed), self.stream, np.uint64(base), n)[0]
        return u.reshape(shape) if shape else float(u[0])


def derive_seed(master_seed, *tags):
    """Deterministic child seed from a master seed and integer tags."""
    ss = np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, *[int(t) for t in tags]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
