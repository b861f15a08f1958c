"""Boundary-corrected Neumann heat kernels on model compact manifolds.

The package assembles q = p + (single-layer correction) for subdomains of
the circle, the round 2-sphere, and the flat 2-torus, then certifies the
kernel identities, the geometric hypotheses, and two-sided Gaussian
bounds numerically.
"""

from .ambient import KernelEvaluator
from .bounds import (BoundFitReport, GaussianBoundSpec, default_grid,
                     fit_bound, near_diag_fit, proof_pipeline_check,
                     upper_volume_fit)
from .errors import HeatLayerError
from .geometry import DomainSpec, ManifoldModel
from .kernel import (NeumannKernel, assemble_q, exact_interval_kernel,
                     neumann_residual, reproducing_check, solve_ibvp)
from .layer import LayerSystem, TimeGrid

__version__ = "0.1.0"

__all__ = [
    "KernelEvaluator", "BoundFitReport", "GaussianBoundSpec",
    "default_grid", "fit_bound", "near_diag_fit", "proof_pipeline_check",
    "upper_volume_fit", "HeatLayerError", "DomainSpec", "ManifoldModel",
    "NeumannKernel", "assemble_q", "exact_interval_kernel",
    "neumann_residual", "reproducing_check", "solve_ibvp", "LayerSystem",
    "TimeGrid", "__version__",
]
