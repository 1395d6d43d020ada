"""Target operating set, centre-of-inertia quantities and segment feasibility."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TargetSetSpec:
    omega_tol: float = 0.01
    phase_spread_max: float = math.pi / 6
    v_tol: float = 0.2
    goal_mode: int = 1

    def __post_init__(self):
        if not (self.omega_tol > 0 and self.phase_spread_max > 0 and self.v_tol > 0):
            raise ValueError("target-set tolerances must be positive")


def coi_angle(deltas, Hs):
    """Inertia-weighted mean rotor angle; works on trailing-axis arrays."""
    deltas = np.asarray(deltas, dtype=float)
    Hs = np.asarray(Hs, dtype=float)
    if deltas.shape[-1] != Hs.shape[-1]:
        raise ValueError("deltas and Hs differ in length")
    return deltas @ Hs / Hs.sum()


def avg_bus_phase(thetas):
    thetas = np.asarray(thetas, dtype=float)
    if thetas.shape[-1] == 0:
        raise ValueError("no bus phases")
    return thetas.mean(axis=-1)


def wrap(a):
    """Reduce angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(a, dtype=float), 2.0 * np.pi)


def phase_spread(thetas):
    """``max - min`` of bus phases taken relative to their average, wrapped."""
    thetas = np.asarray(thetas, dtype=float)
    rel = wrap(thetas - avg_bus_phase(thetas)[..., None])
    return rel.max(axis=-1) - rel.min(axis=-1)


class TargetSet:
    """Membership test for the goal set, bound to a state layout."""

    def __init__(self, spec, layout):
        self.spec = spec
        self.omega = layout["omega"]
        self.theta = layout["theta"]
        self.v = layout["v"]

    def mask(self, mode, X):
        """Row-wise membership for a block of states in one mode."""
        X = np.atleast_2d(X)
        if mode != self.spec.goal_mode:
            return np.zeros(len(X), dtype=bool)
        ok = np.ones(len(X), dtype=bool)
        w = X[:, self.omega]
        if w.shape[1]:
            ok &= np.max(np.abs(w - 1.0), axis=1) <= self.spec.omega_tol
        ok &= phase_spread(X[:, self.theta]) <= self.spec.phase_spread_max
        ok &= np.max(np.abs(X[:, self.v] - 1.0), axis=1) <= self.spec.v_tol
        return ok

    def first_hit(self, mode, X):
        hits = np.flatnonzero(self.mask(mode, X))
        return int(hits[0]) if hits.size else None

    def __call__(self, state):
        return bool(self.mask(state.mode, state.x)[0])


def in_target_set(state, spec, layout):
    return TargetSet(spec, layout)(state)


@dataclass(frozen=True)
class Feasibility:
    """Operating constraints checked on every sample of a segment."""

    v_min: float = 0.5
    omega_dev_max: float = 0.1

    def check(self, layout, X):
        X = np.atleast_2d(X)
        v = X[:, layout["v"]]
        w = X[:, layout["omega"]]
        if np.any(~np.isfinite(X)):
            return False
        if v.size and np.any(v <= self.v_min):
            return False
        if w.size and np.any(np.abs(w - 1.0) >= self.omega_dev_max):
            return False
        return True
