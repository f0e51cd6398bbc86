"""resilmip: perturbation-resilience analysis of small feed-forward networks
via mixed-integer programming, with a built-in parallel branch-and-bound
solver, interval-based big-M sizing, and MPS interchange."""

from .dataflow import (
    IntervalBounds,
    LayerBounds,
    Phase,
    propagate_intervals,
    tighten_lookback,
    write_bounds_dump,
)
from .encoder import (
    EncodedQuery,
    EncodingError,
    QueryKind,
    QuerySpec,
    encode_bound_probe,
    encode_network_eval,
    encode_query,
)
from .mipmodel import (
    Assignment,
    MipModel,
    ModelError,
    ObjSense,
    RowSense,
    VarType,
    check_feasible,
    export_mps,
    feasibility_violations,
    format_lp,
    parse_mps,
)
from .network import (
    ForwardTrace,
    LayerKind,
    LayerSpec,
    Network,
    NetworkFormatError,
    NetworkValidationError,
    class_scores,
    competitor_count,
    forward,
    load_network,
    network_from_dict,
    network_to_dict,
    save_network,
    strongly_classifies,
)
from .resilience import (
    MaxAlphaResult,
    PhiResult,
    RobustnessResult,
    Verdict,
    XiResult,
    check_local_robustness,
    compute_max_alpha,
    compute_phi,
    compute_xi,
    find_strong_anchor,
)
from .solver import SolveConfig, SolveResult, SolveStatus, solve, solve_lp

__version__ = "0.1.0"

__all__ = [
    "Assignment",
    "EncodedQuery",
    "EncodingError",
    "ForwardTrace",
    "IntervalBounds",
    "LayerBounds",
    "LayerKind",
    "LayerSpec",
    "MaxAlphaResult",
    "MipModel",
    "ModelError",
    "Network",
    "NetworkFormatError",
    "NetworkValidationError",
    "ObjSense",
    "Phase",
    "PhiResult",
    "QueryKind",
    "QuerySpec",
    "RobustnessResult",
    "RowSense",
    "SolveConfig",
    "SolveResult",
    "SolveStatus",
    "VarType",
    "Verdict",
    "XiResult",
    "check_feasible",
    "check_local_robustness",
    "class_scores",
    "competitor_count",
    "compute_max_alpha",
    "compute_phi",
    "compute_xi",
    "encode_bound_probe",
    "encode_network_eval",
    "encode_query",
    "export_mps",
    "feasibility_violations",
    "find_strong_anchor",
    "format_lp",
    "forward",
    "load_network",
    "network_from_dict",
    "network_to_dict",
    "parse_mps",
    "propagate_intervals",
    "save_network",
    "solve",
    "solve_lp",
    "strongly_classifies",
    "tighten_lookback",
    "write_bounds_dump",
]
