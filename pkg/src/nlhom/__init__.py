"""Nonlocal evolution equations on perforated domains and their homogenized limits."""

from .errors import ConfigurationError, ConvergenceError, CoverageError, IntegrationError
from .geometry import (Domain, Grid, MaskedField, PerforationSpec, build_grid, domain_mask,
                       effective_density, perforate)
from .kernel import (KernelStencil, build_kernel, coefficient_h0, coefficient_h_eps,
                     coefficient_lambda, convolve, convolve_direct, smoothing_check)
from .nonlinearity import (AveragingSpec, GSpec, appendix_gradient_check, average_m,
                           ball_stencil, reaction_F)
from .evolution import (InitialData, ProblemSpec, Trajectory, bound_monitor, integrate, rhs,
                        rescaled_equivalence_check, step_etd1)
from .spectral import EigenResult, lambda1, rayleigh_quotient
from .harness import (SweepConfig, SweepReport, run_delta_sweep, run_eps_sweep, weak_error)

__version__ = "0.1.0"
