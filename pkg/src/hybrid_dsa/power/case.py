"""Power system case data: buses, branches, machines, and per-mode line status."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import jsonschema


class CaseError(Exception):
    pass


class ParseError(CaseError):
    pass


class ValidationError(CaseError):
    pass


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # "PQ" | "PV" | "slack"
    p_load: float = 0.0
    q_load: float = 0.0
    p_gen: float = 0.0
    v_set: float = 1.0
    v_min: float | None = None
    v_max: float | None = None
    v: float = 1.0
    theta: float = 0.0


@dataclass(frozen=True)
class Line:
    id: str
    from_bus: int
    to_bus: int
    r: float
    x: float
    b: float = 0.0
    tap: float = 1.0
    kind: str = "line"  # "line" | "transformer"


@dataclass(frozen=True)
class Generator:
    id: int
    bus: int
    H: float
    D: float
    xd_p: float
    # filled in by init_generators
    E_p: float | None = None
    delta: float | None = None
    omega: float = 1.0
    P_m: float | None = None


@dataclass(frozen=True)
class PowerSystemCase:
    name: str
    base_mva: float
    freq_hz: float
    buses: tuple
    lines: tuple
    generators: tuple
    modes: tuple  # ((label, frozenset of open line ids), ...) in mode-id order
    control_target: int | None = None
    inputs: tuple = ()
    load_model: str = "constant_power"  # or "constant_impedance"
    pq_vmin: float = 0.7
    provenance: str = ""
    fault_shunts: tuple = ()  # ((bus id, complex admittance), ...)

    @property
    def omega_s(self):
        return 2.0 * 3.141592653589793 * self.freq_hz

    @property
    def bus_index(self):
        return {b.id: k for k, b in enumerate(self.buses)}

    @property
    def slack(self):
        return next(k for k, b in enumerate(self.buses) if b.kind == "slack")

    def mode_id(self, label):
        for k, (name, _) in enumerate(self.modes):
            if name == label:
                return k
        raise KeyError(f"unknown mode {label!r}")

    def line_closed(self, line, mode):
        return line.id not in self.modes[mode][1]

    def generator(self, gen_id):
        return next(g for g in self.generators if g.id == gen_id)

    def with_generators(self, generators):
        return replace(self, generators=tuple(generators))


def apply_fault(case, bus_id, admittance=-1e6j):
    """Return a copy of ``case`` with a shunt fault admittance at ``bus_id``."""
    if bus_id not in case.bus_index:
        raise KeyError(f"unknown bus {bus_id}")
    return replace(case, fault_shunts=case.fault_shunts + ((bus_id, complex(admittance)),))


def clear_fault(case):
    return replace(case, fault_shunts=())


def _schema():
    text = resources.files("hybrid_dsa.data").joinpath("case.schema.json").read_text("utf-8")
    return json.loads(text)


def validate_case(case):
    ids = [b.id for b in case.buses]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate bus ids")
    line_ids = [ln.id for ln in case.lines]
    if len(set(line_ids)) != len(line_ids):
        raise ValidationError("duplicate line ids")
    gen_ids = [g.id for g in case.generators]
    if len(set(gen_ids)) != len(gen_ids):
        raise ValidationError("duplicate generator ids")
    slacks = [b for b in case.buses if b.kind == "slack"]
    if len(slacks) != 1:
        raise ValidationError(f"expected exactly one slack bus, found {len(slacks)}")
    known = set(ids)
    for ln in case.lines:
        if ln.from_bus not in known or ln.to_bus not in known:
            raise ValidationError(f"line {ln.id} references an unknown bus")
        if ln.from_bus == ln.to_bus:
            raise ValidationError(f"line {ln.id} is a self-loop")
        if ln.x == 0:
            raise ValidationError(f"line {ln.id} has zero reactance")
    gen_buses = [g.bus for g in case.generators]
    if len(set(gen_buses)) != len(gen_buses):
        raise ValidationError("at most one generator per bus")
    kinds = {b.id: b.kind for b in case.buses}
    for g in case.generators:
        if g.bus not in known:
            raise ValidationError(f"generator {g.id} references unknown bus {g.bus}")
        if kinds[g.bus] == "PQ":
            raise ValidationError(f"generator {g.id} sits on PQ bus {g.bus}")
        if not (g.H > 0 and g.xd_p > 0):
            raise ValidationError(f"generator {g.id} needs H > 0 and xd_p > 0")
    for b in case.buses:
        if b.kind == "PV" and b.id not in gen_buses:
            raise ValidationError(f"PV bus {b.id} has no generator")
        if b.v_set <= 0:
            raise ValidationError(f"bus {b.id} has a non-positive voltage setpoint")
    if not case.modes:
        raise ValidationError("at least one mode is required")
    for label, opened in case.modes:
        unknown = set(opened) - set(line_ids)
        if unknown:
            raise ValidationError(f"mode {label} opens unknown lines {sorted(unknown)}")
    if case.control_target is not None and case.control_target not in gen_ids:
        raise ValidationError(f"control target {case.control_target} is not a generator")
    return case


def case_from_dict(doc):
    try:
        jsonschema.validate(doc, _schema())
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ValidationError(f"{where}: {exc.message}") from None
    buses = tuple(
        Bus(
            id=b["id"],
            kind=b["kind"],
            p_load=b.get("p_load", 0.0),
            q_load=b.get("q_load", 0.0),
            p_gen=b.get("p_gen", 0.0),
            v_set=b.get("v_set", 1.0),
            v_min=b.get("v_min"),
            v_max=b.get("v_max"),
        )
        for b in doc["buses"]
    )
    lines = tuple(
        Line(
            id=str(ln["id"]),
            from_bus=ln["from"],
            to_bus=ln["to"],
            r=ln["r"],
            x=ln["x"],
            b=ln.get("b", 0.0),
            tap=ln.get("tap", 1.0),
            kind=ln.get("kind", "line"),
        )
        for ln in doc["lines"]
    )
    gens = tuple(
        Generator(id=g["id"], bus=g["bus"], H=g["H"], D=g["D"], xd_p=g["xd_p"])
        for g in doc["generators"]
    )
    modes = tuple(
        (label, frozenset(str(i) for i in spec.get("open", [])))
        for label, spec in doc["modes"].items()
    )
    control = doc.get("control", {})
    case = PowerSystemCase(
        name=doc.get("name", ""),
        base_mva=doc["base_mva"],
        freq_hz=doc["freq_hz"],
        buses=buses,
        lines=lines,
        generators=gens,
        modes=modes,
        control_target=control.get("target"),
        inputs=tuple(float(u) for u in control.get("inputs", [0.0])),
        load_model=doc.get("load_model", {}).get("kind", "constant_power"),
        pq_vmin=doc.get("load_model", {}).get("pq_vmin", 0.7),
        provenance=doc.get("provenance", ""),
    )
    return validate_case(case)


def case_to_dict(case):
    def bus(b):
        d = {"id": b.id, "kind": b.kind, "p_load": b.p_load, "q_load": b.q_load}
        if b.kind != "PQ":
            d["v_set"] = b.v_set
        if b.kind == "PV":
            d["p_gen"] = b.p_gen
        if b.v_min is not None:
            d["v_min"] = b.v_min
        if b.v_max is not None:
            d["v_max"] = b.v_max
        return d

    doc = {
        "name": case.name,
        "provenance": case.provenance,
        "base_mva": case.base_mva,
        "freq_hz": case.freq_hz,
        "buses": [bus(b) for b in case.buses],
        "lines": [
            {"id": ln.id, "from": ln.from_bus, "to": ln.to_bus, "r": ln.r, "x": ln.x,
             "b": ln.b, "tap": ln.tap, "kind": ln.kind}
            for ln in case.lines
        ],
        "generators": [
            {"id": g.id, "bus": g.bus, "H": g.H, "D": g.D, "xd_p": g.xd_p}
            for g in case.generators
        ],
        "modes": {label: {"open": sorted(opened)} for label, opened in case.modes},
        "control": {"inputs": list(case.inputs)},
        "load_model": {"kind": case.load_model, "pq_vmin": case.pq_vmin},
    }
    if case.control_target is not None:
        doc["control"]["target"] = case.control_target
    return doc


def load_case(path):
    """Read and validate a case file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"{path}: {exc}") from None
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    try:
        return case_from_dict(doc)
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def save_case(case, path):
    Path(path).write_text(json.dumps(case_to_dict(case), indent=2) + "\n", encoding="utf-8")


def shipped_case(name):
    """Path of a case file bundled with the package (``smib``, ``twobus``, ``ne39``)."""
    return Path(str(resources.files("hybrid_dsa.data").joinpath(f"{name}.case.json")))
