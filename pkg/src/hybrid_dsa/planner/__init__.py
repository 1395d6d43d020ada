from .distance import DistanceSpec, circular_dist, distance, distances
from .extract import ReplayMismatch, extract_execution, metrics_csv, tree_dumps, tree_to_dict
from .sampling import RangeClass, SamplerSpec, make_streams, sample_state, search_box
from .tree import (
    Candidate,
    Expander,
    Failure,
    NoFeasibleCandidate,
    PlannerConfig,
    PlanResult,
    SearchTree,
    TimingBreakdown,
    TreeNode,
    build_tree,
    expand,
    nearest,
    propagate,
    select_new,
)
