"""Turning a goal node into an execution, and tree / metrics export."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from ..hybrid import ContinuousInput, DiscreteInput, Execution
from .tree import propagate


class ReplayMismatch(RuntimeError):
    pass


def extract_execution(tree, goal_id):
    """Replay the root-to-goal path into an :class:`Execution`.

    Each edge becomes an optional zero-length jump interval followed by a
    continuous interval; the last one is cut at the first goal sample.
    """
    H = tree.automaton
    path = tree.path(goal_id)
    root = tree.nodes[path[0]]
    if len(path) == 1:
        t = root.t
        return Execution([(t, t)], [root.mode], [ContinuousInput(0.0)],
                         [(np.array([t]), root.x[None, :].copy())])
    intervals, modes, inputs, samples = [], [], [], []
    for a, b in zip(path[:-1], path[1:]):
        parent, child = tree.nodes[a], tree.nodes[b]
        _, seg = propagate(H, parent.state, child.mode, child.u, tree.dt, tree.solver)
        X = seg.x
        if not np.array_equal(X[-1], child.x):
            raise ReplayMismatch(f"replay of node {child.id} does not reproduce its state")
        if child.mode != parent.mode:
            t = parent.t
            intervals.append((t, t))
            modes.append(parent.mode)
            inputs.append(DiscreteInput(child.mode))
            samples.append((np.array([t]), parent.x[None, :].copy()))
        times = seg.times
        if b == goal_id and child.goal_sample is not None:
            times = times[: child.goal_sample + 1]
            X = X[: child.goal_sample + 1]
        intervals.append((float(times[0]), float(times[-1])))
        modes.append(child.mode)
        inputs.append(ContinuousInput(float(child.u)))
        samples.append((np.array(times, dtype=float), np.array(X)))
    return Execution(intervals, modes, inputs, samples)


def tree_to_dict(result):
    tree = result.tree
    nodes = []
    for n in tree.nodes:
        nodes.append({
            "id": n.id,
            "parent": n.parent,
            "mode": n.mode,
            "input": None if n.parent is None else {"mode": n.mode, "u": float(n.u)},
            "t": float(n.t),
            "x": [float(v) for v in n.x],
        })
    return {
        "seed": int(result.seed),
        "dt": tree.dt,
        "goal": result.goal,
        "expanded": sorted(tree.cache),
        "nodes": nodes,
    }


def tree_dumps(result):
    # json writes floats with repr(), so the export is exact and byte-stable
    return json.dumps(tree_to_dict(result), indent=1) + "\n"


METRIC_COLUMNS = ("iter", "t_step2", "t_step3", "t_step4", "t_step5", "nodes", "sims_total")


def metrics_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(METRIC_COLUMNS)
    tm = result.timing
    for k, rec in enumerate(result.loops):
        w.writerow([rec.iteration, repr(tm.step2[k]), repr(tm.step3[k]), repr(tm.step4[k]),
                    repr(tm.step5[k]), rec.nodes, rec.sims_total])
    return buf.getvalue()
