"""Hybrid automata, hybrid time trajectories and executions."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np


class HybridError(Exception):
    pass


class EdgeAbsent(HybridError):
    pass


class GuardFailed(HybridError):
    pass


@dataclass(frozen=True)
class DiscreteMode:
    id: int
    label: str


@dataclass(frozen=True)
class Layout:
    """Named index ranges of the continuous state vector.

    ``circular`` lists the group names whose entries are angles.
    """

    slices: tuple
    circular: frozenset = frozenset()

    @classmethod
    def from_sizes(cls, sizes, circular=()):
        out = []
        start = 0
        for name, size in sizes:
            out.append((name, slice(start, start + size)))
            start += size
        return cls(tuple(out), frozenset(circular))

    @property
    def dim(self):
        return max((s.stop for _, s in self.slices), default=0)

    def __getitem__(self, name):
        for key, s in self.slices:
            if key == name:
                return s
        raise KeyError(name)

    def names(self):
        return [key for key, _ in self.slices]

    def indices(self, *names):
        return np.concatenate(
            [np.arange(self[n].start, self[n].stop) for n in names]
        ).astype(int) if names else np.zeros(0, dtype=int)


@dataclass(frozen=True, eq=False)
class HybridState:
    mode: int
    x: np.ndarray
    t: float = 0.0

    def __eq__(self, other):
        if not isinstance(other, HybridState):
            return NotImplemented
        return (
            self.mode == other.mode
            and self.t == other.t
            and np.array_equal(self.x, other.x)
        )

    __hash__ = None


def _always(x):
    return True


def _identity(x):
    return x


@dataclass(frozen=True)
class Transition:
    """Guard and reset attached to one edge.

    ``reset`` returns the representative post-jump state. ``admits`` decides
    membership of a post-jump state in the (possibly set-valued) reset map;
    by default only the representative itself is admitted.
    """

    guard: Callable = _always
    reset: Callable = _identity
    admits: Callable | None = None

    def accepts(self, x_pre, x_post):
        if self.admits is not None:
            return bool(self.admits(x_pre, x_post))
        return np.array_equal(self.reset(x_pre), x_post)


@dataclass(frozen=True)
class HybridAutomaton:
    """A finite-mode hybrid automaton with DAE dynamics per mode.

    The continuous state of every mode is ``x = concat(y, z)`` for the DAE of
    that mode, so all mode DAEs must share ``n_y`` and ``n_z``.
    """

    modes: tuple
    layout: Layout
    inputs: tuple
    transitions: dict
    dynamics: dict
    init: Callable = _always

    def __post_init__(self):
        ids = [m.id for m in self.modes]
        if ids != list(range(len(ids))):
            raise ValueError("mode ids must be dense 0..|Q|-1 in order")
        for a, b in self.transitions:
            if a not in ids or b not in ids:
                raise ValueError(f"edge ({a}, {b}) references an unknown mode")
        dims = {(d.n_y, d.n_z) for d in self.dynamics.values()}
        if len(dims) > 1:
            raise ValueError("mode DAEs disagree on dimensions")
        if set(self.dynamics) != set(ids):
            raise ValueError("every mode needs dynamics")
        if self.n_y + self.n_z != self.dim:
            raise ValueError("layout dimension does not match the DAE dimensions")

    @property
    def edges(self):
        return frozenset(self.transitions)

    @property
    def dim(self):
        return self.layout.dim

    @property
    def n_y(self):
        return next(iter(self.dynamics.values())).n_y

    @property
    def n_z(self):
        return next(iter(self.dynamics.values())).n_z

    def split(self, x):
        return x[: self.n_y], x[self.n_y:]

    def mode(self, q):
        return self.modes[q]


def discrete_step(H, s, target):
    """Take the edge ``(s.mode, target)`` and return the post-jump state."""
    q = target.id if isinstance(target, DiscreteMode) else int(target)
    tr = H.transitions.get((s.mode, q))
    if tr is None:
        raise EdgeAbsent(f"no edge ({s.mode}, {q})")
    if not tr.guard(s.x):
        raise GuardFailed(f"guard of edge ({s.mode}, {q}) rejects the state")
    x = tr.reset(s.x)
    if len(x) != len(s.x):
        raise HybridError("reset changed the state dimension")
    return HybridState(q, x, s.t)


@dataclass(frozen=True)
class Violation:
    clause: str
    index: int
    detail: str = ""

    def __str__(self):
        return f"{self.clause} at {self.index}: {self.detail}".rstrip(": ")


def validate_trajectory(intervals):
    """Check the three interval conditions; return None or a Violation."""
    if len(intervals) == 0:
        return Violation("empty", 0, "hybrid time trajectory has no intervals")
    for i, (a, b) in enumerate(intervals):
        if not a <= b:
            return Violation("order", i, f"tau_i={a} > tau'_i={b}")
        if i + 1 < len(intervals) and b != intervals[i + 1][0]:
            return Violation(
                "gap", i, f"tau'_i={b} != tau_(i+1)={intervals[i + 1][0]}"
            )
    return None


@dataclass(frozen=True)
class ContinuousInput:
    u: float


@dataclass(frozen=True)
class DiscreteInput:
    target: int


@dataclass
class Execution:
    """A finite execution ``(tau, q, x, u)``.

    ``samples[i]`` is ``(times, X)`` for interval ``i`` with one state row per
    sample time. Zero-length intervals carry a :class:`DiscreteInput` naming
    the post-jump mode and a single sample.
    """

    intervals: list
    modes: list
    inputs: list
    samples: list

    @property
    def depth(self):
        return sum(1 for a, b in self.intervals if b > a)

    def to_dict(self):
        inputs = []
        for inp in self.inputs:
            if isinstance(inp, DiscreteInput):
                inputs.append({"target": inp.target})
            else:
                inputs.append({"u": float(inp.u)})
        samples = []
        for i, (times, X) in enumerate(self.samples):
            for t, x in zip(times, X):
                samples.append({"interval": i, "t": float(t), "x": [float(v) for v in x]})
        return {
            "intervals": [[float(a), float(b)] for a, b in self.intervals],
            "modes": [int(q) for q in self.modes],
            "inputs": inputs,
            "samples": samples,
        }

    @classmethod
    def from_dict(cls, doc):
        inputs = [
            DiscreteInput(int(d["target"])) if "target" in d else ContinuousInput(float(d["u"]))
            for d in doc["inputs"]
        ]
        n = len(doc["intervals"])
        per = [([], []) for _ in range(n)]
        for smp in doc["samples"]:
            ts, xs = per[smp["interval"]]
            ts.append(smp["t"])
            xs.append(smp["x"])
        samples = [
            (np.array(ts, dtype=float), np.array(xs, dtype=float).reshape(len(ts), -1))
            for ts, xs in per
        ]
        return cls(
            intervals=[(float(a), float(b)) for a, b in doc["intervals"]],
            modes=[int(q) for q in doc["modes"]],
            inputs=inputs,
            samples=samples,
        )

    def dumps(self):
        # json writes floats with repr(), which round-trips binary64 exactly
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def first_state(chi):
    times, X = chi.samples[0]
    return HybridState(chi.modes[0], X[0].copy(), float(times[0]))


def last_state(chi):
    times, X = chi.samples[-1]
    return HybridState(chi.modes[-1], X[-1].copy(), float(times[-1]))


def concat(first, second):
    """Join two executions; ``second`` must start where ``first`` ends."""
    return Execution(
        intervals=list(first.intervals) + list(second.intervals),
        modes=list(first.modes) + list(second.modes),
        inputs=list(first.inputs) + list(second.inputs),
        samples=list(first.samples) + list(second.samples),
    )


def _structure(chi):
    n = len(chi.intervals)
    if not (len(chi.modes) == len(chi.inputs) == len(chi.samples) == n):
        return Violation("structure", 0, "intervals/modes/inputs/samples lengths differ")
    for i, ((a, b), (times, X)) in enumerate(zip(chi.intervals, chi.samples)):
        if len(times) == 0 or len(X) != len(times):
            return Violation("structure", i, "empty or ragged state series")
        if b > a and len(times) < 2:
            return Violation("structure", i, "positive-length interval needs >= 2 samples")
        if times[0] != a or times[-1] != b:
            return Violation("structure", i, "samples do not span the interval")
        if np.any(np.diff(times) <= 0) and b > a:
            return Violation("structure", i, "sample times not increasing")
        inp = chi.inputs[i]
        if b == a and i + 1 < n and chi.modes[i + 1] != chi.modes[i]:
            if not isinstance(inp, DiscreteInput):
                return Violation("structure", i, "jump interval lacks a discrete input")
        if b > a and not isinstance(inp, ContinuousInput):
            return Violation("structure", i, "continuous interval lacks a continuous input")
    return None


def _dae_violation(dae, q_input, times, X, n_y, tol, i):
    u = q_input
    for k in range(len(times)):
        y, z = X[k, :n_y], X[k, n_y:]
        g = dae.psi(y, z, u)
        if g.size and np.max(np.abs(g)) > tol:
            return Violation("dae", i, f"sample {k}: |psi|={np.max(np.abs(g)):.3e}")
    phi_prev = None
    for k in range(1, len(times)):
        y0, z0 = X[k - 1, :n_y], X[k - 1, n_y:]
        y1, z1 = X[k, :n_y], X[k, n_y:]
        h = times[k] - times[k - 1]
        f0 = dae.phi(y0, z0, u) if phi_prev is None else phi_prev
        f1 = dae.phi(y1, z1, u)
        phi_prev = f1
        defect = y1 - y0 - 0.5 * h * (f0 + f1)
        if defect.size and np.max(np.abs(defect)) > tol:
            return Violation(
                "dae", i, f"sample {k}: trapezoid defect {np.max(np.abs(defect)):.3e}"
            )
    return None


def validate_execution(H, chi, tol=1e-6):
    """Check that ``H`` accepts ``chi``; return None or the first Violation.

    Between samples the solution is not available, so the differential
    equation is checked through the trapezoidal defect of consecutive samples
    and the algebraic equation through ``psi`` at every sample.
    """
    v = _structure(chi)
    if v is not None:
        return v
    v = validate_trajectory(chi.intervals)
    if v is not None:
        return v
    for i, q in enumerate(chi.modes):
        if q not in H.dynamics:
            return Violation("mode", i, f"unknown mode {q}")
    if not H.init(first_state(chi)):
        return Violation("init", 0, "first state is not an initial state")

    for i in range(len(chi.intervals) - 1):
        q_a, q_b = chi.modes[i], chi.modes[i + 1]
        x_a = chi.samples[i][1][-1]
        x_b = chi.samples[i + 1][1][0]
        inp = chi.inputs[i]
        is_jump = isinstance(inp, DiscreteInput) and chi.intervals[i][0] == chi.intervals[i][1]
        if not is_jump:
            # continuity point of a piecewise-constant input inside one mode
            if q_a != q_b or not np.array_equal(x_a, x_b):
                return Violation("continuity", i, "state or mode changes without a jump")
            continue
        if inp.target != q_b:
            return Violation("input", i, f"discrete input {inp.target} != next mode {q_b}")
        tr = H.transitions.get((q_a, q_b))
        if tr is None:
            return Violation("edge", i, f"({q_a}, {q_b}) not in E")
        if not tr.guard(x_a):
            return Violation("guard", i, "guard rejects the pre-jump state")
        if not tr.accepts(x_a, x_b):
            return Violation("reset", i, "post-jump state not in the reset map")

    n_y = H.n_y
    for i, ((a, b), (times, X)) in enumerate(zip(chi.intervals, chi.samples)):
        inp = chi.inputs[i]
        u = inp.u if isinstance(inp, ContinuousInput) else 0.0
        v = _dae_violation(H.dynamics[chi.modes[i]], u, times, X, n_y, tol, i)
        if v is not None:
            return v
    return None


def mode_walk_ok(H, modes):
    """True if consecutive distinct modes are joined by edges of ``H``."""
    return all(a == b or (a, b) in H.transitions for a, b in zip(modes, modes[1:]))
