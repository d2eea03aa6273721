"""Exclusion process with long jumps and a slow barrier at the origin.

Simulation of the particle system, finite-difference solvers for its three
hydrodynamic regimes, weak-form checks, and an experiment harness.
"""
from .kernel import BarrierSpec, JumpKernel, KernelSpec, build_kernel, sigma_S2
from .pde import PdeProblem, PdeSolution, reference_free_step, robin_kappa, solve
from .profiles import parse_profile

__all__ = [
    "BarrierSpec",
    "JumpKernel",
    "KernelSpec",
    "PdeProblem",
    "PdeSolution",
    "build_kernel",
    "parse_profile",
    "reference_free_step",
    "robin_kappa",
    "sigma_S2",
    "solve",
]
__version__ = "0.1.0"
