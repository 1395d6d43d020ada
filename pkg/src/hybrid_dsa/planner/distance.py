"""Hybrid distance: arc distance on angles plus Euclidean distance on the rest.

The discrete mode does not contribute.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sampling import RangeClass

TWO_PI = 2.0 * math.pi


def circular_dist(a, b):
    """Shortest arc between angles, in [0, pi]; works elementwise."""
    d = np.mod(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)), TWO_PI)
    return np.minimum(d, TWO_PI - d)


@dataclass(frozen=True)
class DistanceSpec:
    nonlinear: np.ndarray  # indices measured on the circle
    linear: np.ndarray  # indices measured on the line
    w_nonlinear: float = 1.0
    w_linear: float = 1.0

    def __post_init__(self):
        if np.intersect1d(self.nonlinear, self.linear).size:
            raise ValueError("nonlinear and linear index sets overlap")

    @classmethod
    def from_sampler(cls, spec, w_nonlinear=1.0, w_linear=1.0):
        """Circular variables are nonlinear; excluded ones are not measured."""
        nl = spec.indices(RangeClass.CIRCULAR)
        lin = spec.indices(RangeClass.BOUNDED, RangeClass.RELATIVE)
        return cls(nl, lin, w_nonlinear, w_linear)


def distances(X, x, dspec):
    """Distance from each row of ``X`` to ``x``.

    ``x`` is one continuous state, or a block with one row per row of ``X``.
    """
    X = np.atleast_2d(X)
    x = np.asarray(x, dtype=float)
    arc = circular_dist(X[:, dspec.nonlinear], x[..., dspec.nonlinear])
    lin = X[:, dspec.linear] - x[..., dspec.linear]
    return (
        dspec.w_nonlinear * np.sqrt(np.einsum("ij,ij->i", arc, arc))
        + dspec.w_linear * np.sqrt(np.einsum("ij,ij->i", lin, lin))
    )


def distance(s, s2, dspec):
    """Distance between two hybrid states (modes are ignored)."""
    return float(distances(s.x, s2.x, dspec)[0])
