from .case import (
    Bus,
    CaseError,
    Generator,
    Line,
    ParseError,
    PowerSystemCase,
    ValidationError,
    apply_fault,
    clear_fault,
    load_case,
    save_case,
    shipped_case,
)
from .dynamics import (
    PowerDae,
    build_automaton,
    equilibrium,
    init_generators,
    make_dae,
    restore_consistency,
    state_layout,
)
from .network import IslandedNetwork, PowerFlowDivergence, build_admittance, power_flow
from .security import (
    Feasibility,
    TargetSet,
    TargetSetSpec,
    avg_bus_phase,
    coi_angle,
    in_target_set,
    phase_spread,
)
