"""Numerical laboratory for the diluted p-spin spin-glass model.

Modules: model (Hamiltonian and clause extension), exact (small-N
enumeration), cascades (Poisson-Dirichlet weights), orderparam (functional
order parameter), cavity (cavity equations and population dynamics),
verify (acceptance battery), cli (command line).
"""

__version__ = "0.1.0"

from .cascades import pd_sample, pd_sample_stickbreaking, tilt_reorder
from .cavity import (
    PopDynConfig,
    PopulationDynamicsSolver,
    popdyn_solve,
    qstar_positivity_check,
)
from .exact import (
    MomentQuery,
    cavity_residual_finite_N,
    gg_residual,
    gibbs_moment,
    log_partition,
    overlap_statistics,
    quenched_free_energy,
)
from .model import HamiltonianInstance, energy, sample_instance, theta_ext, theta_pm
from .orderparam import (
    ClosedFormOrderParameter,
    PopulationOrderParameter,
    overlap_pair,
    symmetry_statistic,
)
from .params import ModelParams, PerturbationConfig
from .streams import RandomStreams
from .verify import verify_suite

__all__ = [
    "__version__",
    "ModelParams",
    "PerturbationConfig",
    "RandomStreams",
    "HamiltonianInstance",
    "sample_instance",
    "energy",
    "theta_pm",
    "theta_ext",
    "log_partition",
    "gibbs_moment",
    "quenched_free_energy",
    "overlap_statistics",
    "gg_residual",
    "MomentQuery",
    "cavity_residual_finite_N",
    "pd_sample",
    "pd_sample_stickbreaking",
    "tilt_reorder",
    "ClosedFormOrderParameter",
    "PopulationOrderParameter",
    "overlap_pair",
    "symmetry_statistic",
    "PopDynConfig",
    "popdyn_solve",
    "PopulationDynamicsSolver",
    "qstar_positivity_check",
    "verify_suite",
]
