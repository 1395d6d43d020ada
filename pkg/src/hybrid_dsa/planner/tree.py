"""Hybrid RRT with cached expansion over every (mode, input) pair."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ..dae import DaeError, DaeState, SolverConfig, restore_consistency, simulate
from ..hybrid import HybridError, HybridState, discrete_step
from .distance import distances
from .sampling import make_streams, sample_state


class NoFeasibleCandidate(Exception):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    K: int
    dt: float
    seed: int
    goal: object = None  # TargetSetSpec
    stop_on_goal: bool = True

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be non-negative")
        if not self.dt > 0:
            raise ValueError("dt must be positive")


@dataclass
class TreeNode:
    id: int
    parent: int | None
    mode: int
    u: float | None  # input on the arriving edge; None for the root
    x: np.ndarray
    t: float
    depth: int = 0
    goal_sample: int | None = None  # first goal sample of the arriving segment

    @property
    def state(self):
        return HybridState(self.mode, self.x, self.t)

    @property
    def edge_input(self):
        return None if self.parent is None else (self.mode, self.u)


@dataclass(frozen=True)
class Candidate:
    mode: int
    u: float
    x: np.ndarray  # last state of the segment
    goal_sample: int | None


@dataclass(frozen=True)
class Failure:
    mode: int
    u: float
    reason: str


def propagate(H, state, mode, u, dt, solver):
    """Optional jump to ``mode`` followed by ``dt`` seconds under input ``u``.

    Returns ``(x_start, segment)``; ``x_start`` is the consistent state the
    segment starts from. Tree growth and execution replay both go through
    here, which is what makes replays bitwise exact.
    """
    x = state.x
    dae = H.dynamics[mode]
    if mode != state.mode:
        jumped = discrete_step(H, state, mode)
        x = restore_consistency(dae, jumped.x, u, solver)
    n_y = H.n_y
    seg = simulate(dae, DaeState(x[:n_y], x[n_y:], state.t), u, dt, solver)
    return x, seg


class SearchTree:
    """Append-only tree plus the expansion cache.

    ``cache`` maps an expanded node id to its feasible candidates, so its
    keys are the expanded set. Counters: ``sims_total`` counts simulated
    (mode, input) pairs, ``comparisons`` counts nearest-neighbour distance
    evaluations.
    """

    def __init__(self, root_state, automaton, dt, solver):
        self.automaton = automaton
        self.dt = float(dt)
        self.solver = solver
        self.nodes = []
        self._X = np.empty((64, len(root_state.x)))
        self.cache = {}
        self.failures = {}
        self.sims_total = 0
        self.comparisons = 0
        self._append(TreeNode(0, None, root_state.mode, None, np.array(root_state.x, float),
                              float(root_state.t)))

    def __len__(self):
        return len(self.nodes)

    @property
    def expanded(self):
        return set(self.cache)

    @property
    def root(self):
        return self.nodes[0]

    @property
    def states(self):
        return self._X[: len(self.nodes)]

    def _append(self, node):
        n = len(self.nodes)
        if n == len(self._X):
            grown = np.empty((2 * n, self._X.shape[1]))
            grown[:n] = self._X
            self._X = grown
        self._X[n] = node.x
        self.nodes.append(node)
        return node

    def add_child(self, parent, cand):
        node = TreeNode(
            id=len(self.nodes),
            parent=parent.id,
            mode=cand.mode,
            u=cand.u,
            x=cand.x,
            t=parent.t + self.dt,
            depth=parent.depth + 1,
            goal_sample=cand.goal_sample,
        )
        return self._append(node)

    def path(self, node_id):
        """Node ids from the root to ``node_id``."""
        out = []
        k = node_id
        while k is not None:
            out.append(k)
            k = self.nodes[k].parent
        return out[::-1]


def nearest(tree, x, dspec):
    """Linear scan; ties go to the lowest node id."""
    d = distances(tree.states, x, dspec)
    tree.comparisons += len(d)
    return tree.nodes[int(np.argmin(d))]


class Expander:
    """Candidate children of a node over every (mode, input) pair.

    Each node is simulated at most once; later calls hit the cache.
    """

    def __init__(self, automaton, dt, solver, feasible, goal_hit, pool=None):
        self.H = automaton
        self.dt = dt
        self.solver = solver
        self.feasible = feasible
        self.goal_hit = goal_hit
        self.pool = pool
        self.pairs = [(q.id, u) for q in sorted(automaton.modes, key=lambda m: m.id)
                      for u in automaton.inputs]

    def candidate(self, state, q, u):
        try:
            with np.errstate(all="ignore"):
                _, seg = propagate(self.H, state, q, u, self.dt, self.solver)
        except (DaeError, HybridError) as exc:
            return Failure(q, u, f"{type(exc).__name__}: {exc}")
        X = seg.x
        if not self.feasible(X):
            return Failure(q, u, "constraint violated along the segment")
        # the first sample belongs to the node (or the jump) already in the tree
        hit = self.goal_hit(q, X[1:])
        return Candidate(q, u, X[-1].copy(), None if hit is None else hit + 1)

    def expand(self, tree, node):
        if node.id in tree.cache:
            return tree.cache[node.id]
        state = node.state
        if self.pool is None:
            results = [self.candidate(state, q, u) for q, u in self.pairs]
        else:
            # map keeps the enumeration order, so trees do not depend on threads
            results = list(self.pool.map(lambda p: self.candidate(state, *p), self.pairs))
        tree.sims_total += len(self.pairs)
        cands = [r for r in results if isinstance(r, Candidate)]
        tree.cache[node.id] = cands
        tree.failures[node.id] = [r for r in results if isinstance(r, Failure)]
        return cands


def expand(tree, node, expander):
    return expander.expand(tree, node)


def select_new(candidates, s_rand, dspec):
    """Candidate closest to the sample; ties keep enumeration order."""
    if not candidates:
        raise NoFeasibleCandidate("every (mode, input) pair was infeasible")
    X = np.array([c.x for c in candidates])
    return candidates[int(np.argmin(distances(X, s_rand.x, dspec)))]


@dataclass
class TimingBreakdown:
    """Per-loop wall-clock seconds of sampling, nearest search, expansion and
    selection/insertion, reported as t_step2 .. t_step5."""

    step2: list = field(default_factory=list)
    step3: list = field(default_factory=list)
    step4: list = field(default_factory=list)
    step5: list = field(default_factory=list)
    total: float = 0.0

    def record(self, t0, t1, t2, t3, t4):
        self.step2.append(t1 - t0)
        self.step3.append(t2 - t1)
        self.step4.append(t3 - t2)
        self.step5.append(t4 - t3)

    @property
    def totals(self):
        return {
            "step2": float(np.sum(self.step2)),
            "step3": float(np.sum(self.step3)),
            "step4": float(np.sum(self.step4)),
            "step5": float(np.sum(self.step5)),
        }


@dataclass
class LoopRecord:
    iteration: int
    nodes: int  # tree size after the loop
    sims_total: int
    comparisons: int
    rejected: bool


@dataclass
class PlanResult:
    tree: SearchTree
    goal: int | None
    timing: TimingBreakdown
    loops: list
    seed: int

    @property
    def rejected(self):
        return sum(1 for r in self.loops if r.rejected)

    @property
    def invocation_bound(self):
        H = self.tree.automaton
        return len(H.modes) * len(H.inputs) * len(self.tree.cache)


def build_tree(automaton, s_init, config, *, sampler, dspec, target=None, feasible=None,
               solver=None, threads=1):
    """Grow the tree for ``config.K`` loops from ``s_init``.

    ``target`` needs ``__call__(state)`` and ``first_hit(mode, X)``;
    ``feasible(X)`` screens each segment. Power defaults are built from
    ``config.goal`` and the automaton layout.
    """
    if target is None or feasible is None:
        from ..power.security import Feasibility, TargetSet

        if target is None:
            target = TargetSet(config.goal, automaton.layout)
        if feasible is None:
            fz = Feasibility()
            feasible = lambda X: fz.check(automaton.layout, X)  # noqa: E731
    solver = solver or SolverConfig()
    tree = SearchTree(s_init, automaton, config.dt, solver)
    timing = TimingBreakdown()
    loops = []
    result = PlanResult(tree, None, timing, loops, config.seed)
    if target(tree.root.state):
        result.goal = 0
        if config.stop_on_goal:
            return result
    streams = make_streams(config.seed)
    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    expander = Expander(automaton, config.dt, solver, feasible, target.first_hit, pool)
    start = time.perf_counter()
    try:
        for k in range(1, config.K + 1):
            t0 = time.perf_counter()
            s_rand = sample_state(sampler, streams)
            t1 = time.perf_counter()
            near = nearest(tree, s_rand.x, dspec)
            t2 = time.perf_counter()
            cands = expander.expand(tree, near)
            t3 = time.perf_counter()
            try:
                cand = select_new(cands, s_rand, dspec)
            except NoFeasibleCandidate:
                node = None
            else:
                node = tree.add_child(near, cand)
                if result.goal is None and node.goal_sample is not None:
                    result.goal = node.id
            t4 = time.perf_counter()
            timing.record(t0, t1, t2, t3, t4)
            loops.append(LoopRecord(k, len(tree), tree.sims_total, tree.comparisons, node is None))
            if config.stop_on_goal and result.goal is not None:
                break
    finally:
        if pool is not None:
            pool.shutdown()
        timing.total = time.perf_counter() - start
    return result
