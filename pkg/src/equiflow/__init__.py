"""Planner for multilayer intermodal mobility networks.

Builds the network flow model, assembles and solves the efficiency LP and the
sufficiency QP under budget/safety/capacity constraints, decomposes optimal
flows into explicit origin-destination paths, and reports justice and
efficiency metrics across policy scenarios.
"""

__version__ = "0.1.0"

from .assembler import (
    FarePolicy,
    FlowSolution,
    ObjectiveKind,
    StandardProblem,
    VariableIndex,
    apply_fare_policy,
    assemble,
    extract_flows,
)
from .demand import Demand, DemandSet, Region, load_demand, split_by_bike_share
from .netmodel import (
    Arc,
    ArcKind,
    Layer,
    Network,
    Node,
    load_network,
    prune_unsafe_bike_arcs,
    reachable_arc_set,
    validate_network,
)
from .solver import SolveResult, SolveSettings, SolveStatus, solve

__all__ = [
    "Arc",
    "ArcKind",
    "Demand",
    "DemandSet",
    "FarePolicy",
    "FlowSolution",
    "Layer",
    "Network",
    "Node",
    "ObjectiveKind",
    "Region",
    "SolveResult",
    "SolveSettings",
    "SolveStatus",
    "StandardProblem",
    "VariableIndex",
    "apply_fare_policy",
    "assemble",
    "extract_flows",
    "load_demand",
    "load_network",
    "prune_unsafe_bike_arcs",
    "reachable_arc_set",
    "solve",
    "split_by_bike_share",
    "validate_network",
]
