"""Graph scattering transforms with energy-ratio pruning."""

__version__ = "0.1.0"

from .filters import BankOperator, FilterBank, FilterKernel, frame_bounds, integral_lipschitz, make_bank
from .graph import GraphShift, Spectrum, apply_filter, build_shift, eigendecompose, gft, igft
from .scattering import (
    BudgetExceeded,
    FeatureMap,
    ScatteringNode,
    ScatteringTree,
    aggregate,
    fit_tree,
    gst,
    pgst,
    prune_decide,
    scatter_node,
    topk_prune,
    transform_with_tree,
)

__all__ = [
    "BankOperator", "BudgetExceeded", "FeatureMap", "FilterBank", "FilterKernel", "GraphShift",
    "ScatteringNode", "ScatteringTree", "Spectrum", "aggregate", "apply_filter", "build_shift",
    "eigendecompose", "fit_tree", "frame_bounds", "gft", "gst", "igft", "integral_lipschitz",
    "make_bank", "pgst", "prune_decide", "scatter_node", "topk_prune", "transform_with_tree",
]
