from __future__ import annotations

import numpy as np
import pytest
from _helpers import exp_model
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hybrid_dsa.dae import DaeState, SolverConfig, simulate
from hybrid_dsa.hybrid import (
    ContinuousInput,
    DiscreteInput,
    DiscreteMode,
    EdgeAbsent,
    Execution,
    GuardFailed,
    HybridAutomaton,
    HybridState,
    Layout,
    Transition,
    concat,
    discrete_step,
    first_state,
    last_state,
    mode_walk_ok,
    validate_execution,
    validate_trajectory,
)

CFG = SolverConfig(h=0.01)


def toy_automaton(edges=((0, 1), (1, 0)), guard=None, init=None):
    modes = (DiscreteMode(0, "a"), DiscreteMode(1, "b"), DiscreteMode(2, "c"))
    tr = Transition() if guard is None else Transition(guard=guard)
    kw = {} if init is None else {"init": init}
    return HybridAutomaton(
        modes=modes,
        layout=Layout.from_sizes([("y", 1), ("z", 1)]),
        inputs=(0.0,),
        transitions={e: tr for e in edges},
        dynamics={q: exp_model() for q in range(3)},
        **kw,
    )


def toy_execution():
    """Continuous interval in mode 0, jump to 1, continuous interval in mode 1."""
    a = simulate(exp_model(), DaeState(np.ones(1), np.ones(1), 0.0), 0.0, 1.0, CFG)
    x1 = a.x[-1]
    b = simulate(exp_model(), DaeState(x1[:1], x1[1:], 1.0), 0.0, 1.26, CFG)
    return Execution(
        intervals=[(0.0, 1.0), (1.0, 1.0), (1.0, 2.26)],
        modes=[0, 0, 1],
        inputs=[ContinuousInput(0.0), DiscreteInput(1), ContinuousInput(0.0)],
        samples=[(a.times, a.x), (np.array([1.0]), x1[None, :]), (b.times, b.x)],
    )


def test_trajectory_ok():
    assert validate_trajectory([(0, 1), (1, 1), (1, 2.26)]) is None


def test_trajectory_gap():
    v = validate_trajectory([(0, 1), (2, 3)])
    assert v.clause == "gap" and v.index == 0


def test_trajectory_order():
    v = validate_trajectory([(0, 1), (1, 0.5)])
    assert v.clause == "order" and v.index == 1


def test_trajectory_empty():
    assert validate_trajectory([]).clause == "empty"


def test_discrete_step_identity_reset():
    H = toy_automaton()
    x = np.array([0.25, -3.5])
    s = discrete_step(H, HybridState(0, x, 1.0), DiscreteMode(1, "b"))
    assert s.mode == 1 and s.t == 1.0
    assert s.x.tobytes() == x.tobytes()


def test_discrete_step_edge_absent():
    with pytest.raises(EdgeAbsent):
        discrete_step(toy_automaton(), HybridState(0, np.zeros(2)), 2)


def test_discrete_step_guard_failed():
    H = toy_automaton(guard=lambda x: x[0] > 0)
    with pytest.raises(GuardFailed):
        discrete_step(H, HybridState(0, np.array([-1.0, 0.0])), 1)


@given(arrays(np.float64, 2, elements=st.floats(allow_nan=False, allow_infinity=False)),
       st.sampled_from([(0, 1), (1, 0)]))
def test_identity_reset_is_bitwise(x, edge):
    H = toy_automaton()
    s = discrete_step(H, HybridState(edge[0], x), edge[1])
    assert s.x.tobytes() == x.tobytes() and s.mode == edge[1]


def test_automaton_rejects_sparse_ids():
    with pytest.raises(ValueError):
        HybridAutomaton(modes=(DiscreteMode(1, "x"),), layout=Layout.from_sizes([("y", 1), ("z", 1)]),
                        inputs=(), transitions={}, dynamics={1: exp_model()})


def test_layout_slices():
    lay = Layout.from_sizes([("delta", 2), ("omega", 2), ("theta", 3)], circular=("delta",))
    assert lay.dim == 7
    assert lay["omega"] == slice(2, 4)
    assert list(lay.indices("delta", "theta")) == [0, 1, 4, 5, 6]


def test_valid_execution_accepted():
    chi = toy_execution()
    assert validate_execution(toy_automaton(), chi) is None


def test_perturbed_sample_rejected():
    chi = toy_execution()
    tol = 1e-6
    chi.samples[2][1][40, 0] += 1e3 * tol
    v = validate_execution(toy_automaton(), chi, tol=tol)
    assert v is not None and v.clause == "dae" and v.index == 2


def test_missing_samples_rejected():
    chi = toy_execution()
    chi.samples[0] = (np.zeros(0), np.zeros((0, 2)))
    v = validate_execution(toy_automaton(), chi)
    assert v is not None and v.index == 0


def test_jump_without_edge_rejected():
    chi = toy_execution()
    v = validate_execution(toy_automaton(edges=((1, 0),)), chi)
    assert v.clause == "edge"


def test_init_predicate_enforced():
    chi = toy_execution()
    H = toy_automaton(init=lambda s: s.x[0] == 2.0)
    assert validate_execution(H, chi).clause == "init"


def test_reset_violation_rejected():
    chi = toy_execution()
    chi.samples[2][1][0, 0] += 0.1
    assert validate_execution(toy_automaton(), chi).clause == "reset"


def test_first_last_state():
    chi = toy_execution()
    assert first_state(chi) == HybridState(0, chi.samples[0][1][0], 0.0)
    assert last_state(chi) == HybridState(1, chi.samples[2][1][-1], 2.26)


def test_last_state_after_trailing_jump():
    chi = toy_execution()
    x = chi.samples[2][1][-1]
    chi.intervals.append((2.26, 2.26))
    chi.modes.append(0)
    chi.inputs.append(DiscreteInput(0))
    chi.samples.append((np.array([2.26]), x[None, :]))
    assert last_state(chi).mode == 0


def test_concat_last_is_second_last():
    a = toy_execution()
    b = toy_execution()
    assert last_state(concat(a, b)) == last_state(b)


def test_execution_json_roundtrip_lossless():
    chi = toy_execution()
    chi.samples[0][1][3, 0] = 0.1 + 0.2  # not representable in short decimal
    back = Execution.loads(chi.dumps())
    assert back.intervals == chi.intervals and back.modes == chi.modes
    assert back.inputs == chi.inputs
    for (t0, x0), (t1, x1) in zip(chi.samples, back.samples):
        assert t0.tobytes() == t1.tobytes() and x0.tobytes() == x1.tobytes()


def test_depth_counts_continuous_intervals():
    assert toy_execution().depth == 2


def test_mode_walk():
    H = toy_automaton()
    assert mode_walk_ok(H, [0, 0, 1, 0])
    assert not mode_walk_ok(H, [0, 2])
