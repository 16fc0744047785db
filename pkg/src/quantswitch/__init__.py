"""Quantization schemes for multi-regime optimal switching problems."""

__version__ = "0.1.0"

from .model import SwitchingModel, TimeGrid, validate_costs, validate_terminal  # noqa: E402
from .gauss_quant import GaussianQuantizer, build_gaussian_quantizer, load_quantizer, save_quantizer  # noqa: E402
from .markovian import LatticeGrid, ValueSurface, build_lattice, evaluate_policy, solve, value_at  # noqa: E402
from .marginal import (allocate_grid_sizes, build_quantization_tree, load_tree, save_tree,  # noqa: E402
                       tree_solve)

__all__ = [
    "SwitchingModel", "TimeGrid", "validate_costs", "validate_terminal",
    "GaussianQuantizer", "build_gaussian_quantizer", "load_quantizer", "save_quantizer",
    "LatticeGrid", "ValueSurface", "build_lattice", "evaluate_policy", "solve", "value_at",
    "allocate_grid_sizes", "build_quantization_tree", "load_tree", "save_tree", "tree_solve",
]
