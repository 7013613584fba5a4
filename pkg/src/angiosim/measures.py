"""Weighted point clouds in phase space."""

from dataclasses import dataclass

import numpy as np


@dataclass
class EmpiricalMeasure:
    """Atoms ``(x_i, v_i)`` with a common weight (``1/N`` for tip snapshots).

    ``ids`` is optional bookkeeping and does not enter any pairing.
    """

    x: np.ndarray
    v: np.ndarray
    weight: float
    ids: np.ndarray = None

    def __post_init__(self):
        self.x = np.atleast_2d(np.asarray(self.x, dtype=float))
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        if self.x.shape != self.v.shape:
            raise ValueError("x and v must have the same shape")
        if not self.weight >= 0:
            raise ValueError("weight >= 0 violated")

    @property
    def n_atoms(self) -> int:
        return self.x.shape[0]

    @property
    def dim(self) -> int:
        return self.x.shape[1]

    @property
    def total_mass(self) -> float:
        return self.n_atoms * self.weight

    def pair(self, phi) -> float:
        """``<mu, phi>`` for ``phi(x, v)`` vectorized over rows."""
        if self.n_atoms == 0:
            return 0.0
        return float(self.weight * np.sum(phi(self.x, self.v)))

    @classmethod
    def empty(cls, dim, weight=1.0):
        return cls(np.zeros((0, dim)), np.zeros((0, dim)), weight)
