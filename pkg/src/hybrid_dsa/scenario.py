"""Scenario files and the post-fault planning problem they describe."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .dae import DaeState, SolverConfig, index1_check, restore_consistency, simulate
from .hybrid import HybridState
from .planner.distance import DistanceSpec
from .planner.sampling import search_box
from .planner.tree import PlannerConfig
from .power.case import ParseError, ValidationError, apply_fault, load_case, shipped_case
from .power.dynamics import build_automaton, equilibrium, make_dae, state_layout
from .power.security import Feasibility, TargetSet, TargetSetSpec

SCHEMA_VERSION = 1
SHIPPED_CASES = ("smib", "twobus", "ne39")


class ScenarioError(ValidationError):
    pass


@dataclass(frozen=True)
class FaultSpec:
    bus: int
    t_on: float
    t_clear: float
    prefault_mode: str
    admittance: complex = -1e6j


@dataclass(frozen=True)
class Scenario:
    name: str
    case_path: Path
    fault: FaultSpec
    initial_mode: str
    planner: PlannerConfig
    goal_mode: str
    goal: TargetSetSpec
    feasibility: Feasibility = Feasibility()
    solver: SolverConfig = SolverConfig()
    t_end: float = 10.0  # horizon of the simulate command
    sim_u: float = 0.0
    bench_ks: tuple = tuple(range(100, 1001, 100))
    output: Path = Path("out")
    source: Path | None = field(default=None, compare=False)

    @property
    def case(self):
        return load_case(self.case_path)


def _schema():
    return json.loads(
        resources.files("hybrid_dsa.data").joinpath("scenario.schema.json").read_text("utf-8")
    )


def scenario_from_dict(doc, base=Path(".")):
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ScenarioError(f"{where}: {exc.message}") from None
    case_ref = doc["case"]
    if case_ref in SHIPPED_CASES:
        case_path = shipped_case(case_ref)
    else:
        case_path = (base / case_ref).resolve()
    f = doc["fault"]
    if not f["t_on"] < f["t_clear"]:
        raise ScenarioError("fault: t_on must be earlier than t_clear")
    fault = FaultSpec(
        bus=f["bus"],
        t_on=float(f["t_on"]),
        t_clear=float(f["t_clear"]),
        prefault_mode=f["prefault_mode"],
        admittance=complex(0.0, f.get("admittance_im", -1e6)),
    )
    p = doc["planner"]
    g = doc.get("goal", {})
    goal_mode = g.get("goal_mode", fault.prefault_mode)
    sv = doc.get("solver", {})
    sim = doc.get("simulate", {})
    return Scenario(
        name=doc.get("name", ""),
        case_path=case_path,
        fault=fault,
        initial_mode=doc["initial_mode"],
        planner=PlannerConfig(
            K=p["K"], dt=float(p["dt"]), seed=p.get("seed"),
            stop_on_goal=p.get("stop_on_goal", True),
        ),
        goal_mode=goal_mode,
        goal=TargetSetSpec(
            omega_tol=g.get("omega_tol", 0.01),
            phase_spread_max=g.get("phase_spread_max", np.pi / 6),
            v_tol=g.get("v_tol", 0.2),
            goal_mode=-1,  # resolved against the case in build_problem
        ),
        feasibility=Feasibility(**doc.get("feasibility", {})),
        solver=SolverConfig(**sv),
        t_end=float(sim.get("t_end", 10.0)),
        sim_u=float(sim.get("u", 0.0)),
        bench_ks=tuple(doc.get("bench", {}).get("ks", range(100, 1001, 100))),
        output=(base / doc.get("output", "out")),
        source=None,
    )


def load_scenario(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        sc = scenario_from_dict(doc, base=path.parent)
        check_references(sc)
    except ValidationError as exc:
        raise ScenarioError(f"{path}: {exc}") from None
    return replace(sc, source=path)


def check_references(sc, case=None):
    """The fault bus and every mode label must exist in the case."""
    case = sc.case if case is None else case
    if sc.fault.bus not in case.bus_index:
        raise ScenarioError(f"fault bus {sc.fault.bus} is not in the case")
    labels = [name for name, _ in case.modes]
    for what, label in (("fault.prefault_mode", sc.fault.prefault_mode),
                        ("initial_mode", sc.initial_mode), ("goal.goal_mode", sc.goal_mode)):
        if label not in labels:
            raise ScenarioError(f"{what}: unknown mode {label!r} (case has {labels})")


def shipped_scenario(name):
    return Path(str(resources.files("hybrid_dsa.data").joinpath(f"{name}.scenario.json")))


def with_overrides(sc, seed=None, K=None, output=None):
    planner = sc.planner
    if seed is not None:
        planner = replace(planner, seed=int(seed))
    if K is not None:
        planner = replace(planner, K=int(K))
    out = sc.output if output is None else Path(output)
    return replace(sc, planner=planner, output=out)


@dataclass
class FaultSequence:
    """Pre-fault hold, faulted interval and clearing; ends in ``s_init``."""

    case: object  # case with initialized machines
    equilibrium: object
    segments: list  # (label, mode id, TrajectorySegment)
    s_init: HybridState
    daes: list = field(default_factory=list)  # model of each segment


def fault_sequence(sc, case=None):
    case = sc.case if case is None else case
    f = sc.fault
    if f.bus not in case.bus_index:
        raise ScenarioError(f"fault bus {f.bus} is not in the case")
    pre = case.mode_id(f.prefault_mode)
    post = case.mode_id(sc.initial_mode)
    eq = equilibrium(case, pre)
    case = eq.case
    cfg = sc.solver
    x = eq.x
    n_y = 2 * len(case.generators)
    segments = []
    daes = []

    def run(dae, x, t0, duration, label, mode):
        seg = simulate(dae, DaeState(x[:n_y], x[n_y:], t0), 0.0, duration, cfg)
        segments.append((label, mode, seg))
        daes.append(dae)
        return np.concatenate([seg.y[-1], seg.z[-1]])

    if f.t_on > 0:
        x = run(make_dae(case, pre), x, 0.0, f.t_on, "prefault", pre)
    faulted = make_dae(apply_fault(case, f.bus, f.admittance), pre)
    x = restore_consistency(faulted, _fault_guess(faulted, x, case.bus_index[f.bus], f), 0.0, cfg)
    x = run(faulted, x, f.t_on, f.t_clear - f.t_on, "fault", pre)
    # faulted voltages sit next to the spurious v = 0 branch of the cleared
    # network, so the clearing solve starts from the pre-fault voltages
    x = np.concatenate([x[:n_y], eq.x[n_y:]])
    x = restore_consistency(make_dae(case, post), x, 0.0, cfg)
    return FaultSequence(case, eq, segments, HybridState(post, x, f.t_clear), daes)


def _fault_guess(dae, x, k, f):
    """Seed the fault-bus voltage with the shunt voltage-divider estimate;
    Newton from the pre-fault value only halves it per iteration."""
    x = x.copy()
    n_y = dae.n_y
    nb = dae.nb
    y_kk = dae.Y[k, k] - f.admittance
    x[n_y + nb + k] *= abs(y_kk) / abs(dae.Y[k, k])
    return x


def power_search_box(case, eq_x):
    """Search box of a power case.

    Bus voltage limits become BOUNDED ranges, and the angle and voltage of
    a slack bus without a machine (an infinite bus) are excluded.
    """
    layout = state_layout(case)
    ng = len(case.generators)
    nb = len(case.buses)
    v0 = 2 * ng + nb
    bounds = {}
    for k, b in enumerate(case.buses):
        if b.v_min is not None and b.v_max is not None:
            bounds[v0 + k] = (b.v_min, b.v_max)
    gen_buses = {g.bus for g in case.generators}
    excluded = ()
    s = case.slack
    if case.buses[s].id not in gen_buses:
        excluded = (2 * ng + s, v0 + s)
    modes = tuple(range(len(case.modes)))
    return search_box(layout, eq_x, modes, bounds, excluded)


@dataclass
class Problem:
    scenario: Scenario
    sequence: FaultSequence
    automaton: object
    s_init: HybridState
    config: PlannerConfig
    sampler: object
    dspec: DistanceSpec
    target: TargetSet
    feasible: object


def build_problem(sc):
    """Everything ``build_tree`` needs for a scenario."""
    seq = fault_sequence(sc)
    case = seq.case
    s0 = seq.s_init

    def init(state):
        return state.mode == s0.mode and np.array_equal(state.x, s0.x)

    H = build_automaton(case, init=init)
    goal = replace(sc.goal, goal_mode=case.mode_id(sc.goal_mode))
    config = replace(sc.planner, goal=goal)
    sampler = power_search_box(case, seq.equilibrium.x)
    layout = H.layout
    fz = sc.feasibility
    return Problem(
        scenario=sc,
        sequence=seq,
        automaton=H,
        s_init=s0,
        config=config,
        sampler=sampler,
        dspec=DistanceSpec.from_sampler(sampler),
        target=TargetSet(goal, layout),
        feasible=lambda X: fz.check(layout, X),
    )


def plan(problem, threads=1):
    from .planner.tree import build_tree

    if problem.config.seed is None:
        raise ScenarioError("the planner needs a seed (scenario file or --seed)")
    return build_tree(
        problem.automaton, problem.s_init, problem.config,
        sampler=problem.sampler, dspec=problem.dspec, target=problem.target,
        feasible=problem.feasible, solver=problem.scenario.solver, threads=threads,
    )


def index1_survey(problem, result=None, execution=None):
    """Run ``index1_check`` on every state the analysis visited: the fault
    sequence samples, the tree nodes and the execution samples."""
    checked = 0
    singular = 0
    worst = 0.0

    def check(dae, x, u):
        nonlocal checked, singular, worst
        r = index1_check(dae, x[:dae.n_y], x[dae.n_y:], u)
        checked += 1
        if r["nonsingular"]:
            worst = max(worst, r["condition_estimate"])
        else:
            singular += 1

    for (_, _, seg), dae in zip(problem.sequence.segments, problem.sequence.daes):
        for x in seg.x:
            check(dae, x, seg.u)
    H = problem.automaton
    check(H.dynamics[problem.s_init.mode], problem.s_init.x, 0.0)
    if result is not None:
        for n in result.tree.nodes:
            check(H.dynamics[n.mode], n.x, 0.0 if n.u is None else n.u)
    if execution is not None:
        for q, inp, (_, X) in zip(execution.modes, execution.inputs, execution.samples):
            u = getattr(inp, "u", 0.0)
            for x in X:
                check(H.dynamics[q], x, u)
    return {"states_checked": checked, "singular": singular, "max_condition": worst}
