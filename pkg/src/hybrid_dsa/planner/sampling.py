"""Search-space description and uniform hybrid sampling."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from ..hybrid import HybridState


class RangeClass(IntEnum):
    CIRCULAR = 0  # (-pi, pi]
    BOUNDED = 1  # declared [lo, hi]
    RELATIVE = 2  # x* -/+ 0.1 |x*|
    EXCLUDED = 3  # reference setpoint: never sampled nor measured


RELATIVE_SPAN = 0.1


@dataclass(frozen=True)
class SamplerSpec:
    """Per-variable sampling ranges over a fixed list of modes.

    ``lo``/``hi`` are meaningful for BOUNDED and RELATIVE entries; EXCLUDED
    entries are pinned to ``reference``.
    """

    modes: tuple
    classes: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        n = len(self.classes)
        if not (len(self.lo) == len(self.hi) == len(self.reference) == n):
            raise ValueError("per-variable arrays differ in length")
        if not self.modes:
            raise ValueError("at least one mode is required")
        box = (self.classes == RangeClass.BOUNDED) | (self.classes == RangeClass.RELATIVE)
        if np.any(self.lo[box] > self.hi[box]):
            raise ValueError("a sampling range has lo > hi")

    @property
    def dim(self):
        return len(self.classes)

    def indices(self, *kinds):
        return np.flatnonzero(np.isin(self.classes, [int(k) for k in kinds]))


def relative_range(x_star, span=RELATIVE_SPAN):
    d = span * abs(x_star)
    return x_star - d, x_star + d


def search_box(layout, equilibrium, modes, bounds=None, excluded=()):
    """Classify every state variable by the three search-box rules.

    Variables in the layout's circular slices are CIRCULAR; those with an
    entry in ``bounds`` (index -> (lo, hi)) are BOUNDED; the rest are
    RELATIVE around ``equilibrium``. ``excluded`` indices override all.
    """
    x_star = np.asarray(equilibrium, dtype=float)
    n = layout.dim
    if x_star.shape != (n,):
        raise ValueError(f"equilibrium has shape {x_star.shape}, expected ({n},)")
    bounds = dict(bounds or {})
    classes = np.full(n, int(RangeClass.RELATIVE))
    lo = np.zeros(n)
    hi = np.zeros(n)
    circ = set(layout.indices(*layout.circular).tolist())
    for i in range(n):
        if i in circ:
            classes[i] = RangeClass.CIRCULAR
            lo[i], hi[i] = -math.pi, math.pi
        elif i in bounds:
            classes[i] = RangeClass.BOUNDED
            lo[i], hi[i] = bounds[i]
        else:
            lo[i], hi[i] = relative_range(x_star[i])
    for i in excluded:
        classes[i] = RangeClass.EXCLUDED
        lo[i] = hi[i] = x_star[i]
    return SamplerSpec(tuple(modes), classes, lo, hi, x_star.copy())


def make_streams(seed):
    """Independent Philox streams for mode and continuous draws."""
    mode_seq, cont_seq = np.random.SeedSequence(int(seed)).spawn(2)
    return (
        np.random.Generator(np.random.Philox(mode_seq)),
        np.random.Generator(np.random.Philox(cont_seq)),
    )


def sample_state(spec, streams):
    """One uniform hybrid draw; ``streams`` comes from :func:`make_streams`."""
    mode_rng, cont_rng = streams
    mode = spec.modes[int(mode_rng.integers(len(spec.modes)))]
    r = cont_rng.random(spec.dim)  # [0, 1)
    cls = spec.classes
    circ = cls == RangeClass.CIRCULAR
    box = (cls == RangeClass.BOUNDED) | (cls == RangeClass.RELATIVE)
    excl = cls == RangeClass.EXCLUDED
    x = np.empty(spec.dim)
    # pi - 2 pi r maps [0, 1) onto (-pi, pi]
    x[circ] = math.pi - 2.0 * math.pi * r[circ]
    x[box] = spec.lo[box] + (spec.hi[box] - spec.lo[box]) * r[box]
    x[excl] = spec.reference[excl]
    return HybridState(mode, x)
