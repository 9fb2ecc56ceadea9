"""PV-and-M inversion on the periodic 3-torus as strongly convex energy minimization."""

from .diagnostics import (HolderReport, RateFit, epsilon_sweep, fit_campanato_exponent, holder_estimate,
                          inequality_audit, interface_extract, refinement_study)
from .energy import (InversionData, LogisticStep, PhaseField, PhysicalConstants, agnostic_coefficient,
                     conserved_energy, energy_eps, grad_conserved, grad_energy, grad_energy_eps,
                     phases, residual_general)
from . import energy  # the module; the energy functional is energy.energy
from .errors import *  # noqa: F401,F403
from .exact1d import Exact1DSolution, Profile1D, baseball_cap, build_exact, phi, phi_inv, sharpness_family
from .grid import GridSpec, ScalarField, VectorField, project_mean_zero, random_field
from .mollifier import (MollifierProfile, MollifierSpec, check_F_properties, f_eps, min0, min_eps,
                        mollifier_from_F, named_profile)
from .operators import (diff, finite_difference, grad, grad_h, inner_L2, inverse_laplacian, laplacian,
                        laplacian_h, norm_H1, norm_Hneg1, norm_L2)
from .solver import SolveConfig, SolveReport, certified_gap, continuation_solve, solve, solve_eps

__version__ = "0.1.0"
