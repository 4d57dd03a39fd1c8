"""Exact enumeration of the linear regions of piecewise-linear networks."""

from .arrangement import (
    EnumerationStats,
    Partition,
    Region,
    SearchOptions,
    brute_force_enumerate,
    enumerate_layer,
    general_position_count,
)
from .deep import SubdivisionFrame, enumerate_network, root_frame, subdivide
from .lp import (
    EPS_CAP,
    TAU_INTERIOR,
    Box,
    CutResult,
    HalfspaceSystem,
    LPNumericalError,
    LPResult,
    LPStatus,
    hyperplane_cuts_region,
    interior_point,
)
from .network import (
    Activation,
    DeepSignPattern,
    Layer,
    Network,
    NetworkFormatError,
    SignPattern,
    activation_pattern,
    forward,
    load_network,
    network_from_dict,
    network_to_dict,
    random_network,
    region_affine_map,
    save_network,
)
from .sampling import ComparisonReport, DiscoveryCurve, compare, sample_discover
from .slice2d import SliceSpec, restrict_network, slice_partition, slice_svg

__version__ = "0.1.0"

__all__ = [
    "Activation",
    "Box",
    "ComparisonReport",
    "CutResult",
    "DeepSignPattern",
    "DiscoveryCurve",
    "EnumerationStats",
    "EPS_CAP",
    "HalfspaceSystem",
    "Layer",
    "LPNumericalError",
    "LPResult",
    "LPStatus",
    "Network",
    "NetworkFormatError",
    "Partition",
    "Region",
    "SearchOptions",
    "SignPattern",
    "SliceSpec",
    "SubdivisionFrame",
    "TAU_INTERIOR",
    "activation_pattern",
    "brute_force_enumerate",
    "compare",
    "enumerate_layer",
    "enumerate_network",
    "forward",
    "general_position_count",
    "hyperplane_cuts_region",
    "interior_point",
    "load_network",
    "network_from_dict",
    "network_to_dict",
    "random_network",
    "region_affine_map",
    "restrict_network",
    "root_frame",
    "sample_discover",
    "save_network",
    "slice_partition",
    "slice_svg",
    "subdivide",
]
