"""Onsager free-energy minimization for interacting corpora on compact metric spaces."""

from .branch import BranchPoint, branch_sweep, find_branches, h, h_reduced, weighted_average
from .kernel import (KernelMatrix, KernelSpec, assemble, rhombus_kernel, sized_two_rod_kernel, two_rod_kernel,
                     validate)
from .limit import (ConcentrationReport, SelectionSpec, ZeroSet, concentration, neighborhood_volume_profile,
                    selection_test, zero_pairs)
from .solver import (OnsagerState, SolverConfig, continue_in_b, free_energy, gateaux_check, onsager_map,
                     potential, solve)
from .space import Axis, Density, DiscreteSpace, bl_distance, build_space, entropy, product_space

__version__ = "0.1.0"

__all__ = [
    "Axis", "BranchPoint", "ConcentrationReport", "Density", "DiscreteSpace", "KernelMatrix", "KernelSpec",
    "OnsagerState", "SelectionSpec", "SolverConfig", "ZeroSet", "assemble", "bl_distance", "branch_sweep",
    "build_space", "concentration", "continue_in_b", "entropy", "find_branches", "free_energy",
    "gateaux_check", "h", "h_reduced", "neighborhood_volume_profile", "onsager_map", "potential",
    "product_space", "rhombus_kernel", "selection_test", "sized_two_rod_kernel", "solve", "two_rod_kernel",
    "validate", "weighted_average", "zero_pairs",
]
