"""Numerical experiments on elliptic singular integrals over totally irregular measures."""

from .config import ExperimentConfig, preset
from .filtration import StoppingParams, build_filtration, decompose_energy
from .kernels import ConstantMatrix, EllipticKernel, MatrixField
from .lattice import build_lattice, classify_doubling
from .measure import AtomicMeasure, RatioSchedule, make_cantor_measure, make_graph_measure
from .operators import apply_T, apply_T_adjoint, operator_norm_estimate

__version__ = "0.1.0"

__all__ = [
    "AtomicMeasure", "ConstantMatrix", "EllipticKernel", "ExperimentConfig", "MatrixField",
    "RatioSchedule", "StoppingParams", "apply_T", "apply_T_adjoint", "build_filtration",
    "build_lattice", "classify_doubling", "decompose_energy", "make_cantor_measure",
    "make_graph_measure", "operator_norm_estimate", "preset",
]
