"""Semiclassical resolvent estimates for Schrodinger operators with multipolar
inverse-square potentials: discretization, norm probes and defect-measure
diagnostics."""

__version__ = "0.1.0"

from .cutoffs import Cutoff  # noqa: E402
from .errors import (ConfigError, DomainError, GeometryError, HypothesisError, ResolutionError,  # noqa: E402
                     ResolventError, SingularOperatorError, UnsupportedConfiguration)
from .operators import SemiclassicalParams, assemble_cartesian, assemble_radial_mode  # noqa: E402
from .potential import (Pole, PotentialSpec, barrier_well, effective_radial, evaluate_potential,  # noqa: E402
                        hardy_quotient, inverse_square, validate_hypotheses)
from .resolvent import (CartesianPolicy, RadialModePolicy, fit_power_law, frequency_sweep,  # noqa: E402
                        resolvent_norm, unipolar_mode_norm)
from .sphere import analytic_basis, angular_eigenproblem, split_modes  # noqa: E402
from .radial import OdeCoefficients, RadialGrid, build_basis  # noqa: E402

__all__ = [
    "__version__", "Cutoff", "ConfigError", "DomainError", "GeometryError", "HypothesisError", "ResolutionError",
    "ResolventError", "SingularOperatorError", "UnsupportedConfiguration", "SemiclassicalParams",
    "assemble_cartesian", "assemble_radial_mode", "Pole", "PotentialSpec", "barrier_well", "effective_radial",
    "evaluate_potential", "hardy_quotient", "inverse_square", "validate_hypotheses", "CartesianPolicy",
    "RadialModePolicy", "fit_power_law", "frequency_sweep", "resolvent_norm", "unipolar_mode_norm",
    "analytic_basis", "angular_eigenproblem", "split_modes", "OdeCoefficients", "RadialGrid", "build_basis",
]
