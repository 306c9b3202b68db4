"""Dyson equation solvers, log-potential and support computations"""
from .dyson import MdeSolution, SolverConfig, VdeSolution, solve_mde, solve_vde
from .brown import QuadratureConfig, compute_L, density_from_L, potential_field, total_mass
from .support import SupportConfig, dist_zero_support, region_S_eps, rho_density

__all__ = [
    "MdeSolution",
    "QuadratureConfig",
    "SolverConfig",
    "SupportConfig",
    "VdeSolution",
    "compute_L",
    "density_from_L",
    "dist_zero_support",
    "potential_field",
    "region_S_eps",
    "rho_density",
    "solve_mde",
    "solve_vde",
    "total_mass",
]
