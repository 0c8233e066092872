"""Numerical toolkit for the replica-symmetric analysis of the generalized
Ising perceptron: Gauss-Hermite quadrature, activation functionals, the
(q, psi) fixed point and RS free energy, state evolution, AMP simulation
with Gaussian conditioning checks, the Psi/A2 variational calculus, and
exact small-N partition-function enumeration.
"""
from . import activation, amp, enumeration, moments, quadrature, rs, sevol
from .activation import (ActivationSpec, ConstantsReport, band, clipped_exp,
                         estimate_constants, gauss_bump, halfspace, smooth,
                         tabulated, tabulated_from_file)
from .amp import AmpTrace, amp_run, clt_cov_check, condition_project, \
    conditional_mean_check, resample_check, se_check, sigma_cov
from .enumeration import (EnumerationResult, enumerate_logZ,
                          free_energy_experiment, naive_logZ)
from .errors import (CapViolationError, CollinearityError,
                     DegenerateConfigurationError, DegenerateFixedPointError,
                     MultipleRootsError, NoBracketingRootError,
                     NonFiniteIntegrandError, NumericalError,
                     StateEvolutionDegeneracyError, VanishingMassError)
from .moments import (OverlapParams, a2_derivative0, a2_functional,
                      admissible_zeta, conditional_first_moment_estimate,
                      overlap_params, pair_lambda, psi_functional,
                      psi_gradient, psi_hessian, q_measure_sample)
from .quadrature import QuadratureRule, adaptive_simpson, expect_g, \
    expect_g2, gauss_hermite
from .rs import (RsSolution, annealed, at_condition, onsager, qbar, qbar_inv,
                 rbar, rs_eta_sweep, rs_free_energy, solve_fixed_point)
from .sevol import SeTrace, se_init, se_run, se_step

__version__ = "1.0.0"
