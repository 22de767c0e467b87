"""FDR control for high-dimensional linear models via debiased Lasso statistics.

Typical use::

    from fcd import fit_fcd
    fit = fit_fcd(X, y, q=0.1)
    fit.selection.selected, fit.selection.signs
"""

__version__ = "0.1.0"

from ._backend import BACKEND, compiled_available
from .debias import compute_decorrelator, debias_estimate, empirical_covariance
from .exceptions import (
    DegenerateNoiseError,
    DegenerateVarianceError,
    DomainError,
    FCDError,
    NumericalError,
    ShapeError,
)
from .gauss import power_F, std_normal_cdf, std_normal_isf, std_normal_quantile, tail_G
from .pipeline import FCDFit, fit_fcd, prepare_design
from .power import GroundTruth, directional_metrics, power_lower_bound, unit_power_margin
from .selection import compute_pvalues, fcd_threshold, test_statistics
from .simulate import SimConfig, bh_baseline, run_replicate, run_sweep
from .solvers import solve_lasso, solve_scaled_lasso

__all__ = [
    "BACKEND", "compiled_available",
    "compute_decorrelator", "debias_estimate", "empirical_covariance",
    "DegenerateNoiseError", "DegenerateVarianceError", "DomainError", "FCDError",
    "NumericalError", "ShapeError",
    "power_F", "std_normal_cdf", "std_normal_isf", "std_normal_quantile", "tail_G",
    "FCDFit", "fit_fcd", "prepare_design",
    "GroundTruth", "directional_metrics", "power_lower_bound", "unit_power_margin",
    "compute_pvalues", "fcd_threshold", "test_statistics",
    "SimConfig", "bh_baseline", "run_replicate", "run_sweep",
    "solve_lasso", "solve_scaled_lasso",
]
