"""Moderately interacting particle approximations of stable-driven density-dependent SDEs."""
from .errors import NumericalAbort, ValidationError
from .stable_noise import (GridField, StableNoiseConfig, heat_kernel_grid, sample_stable_increment,
                           sample_subordinator_increment, semigroup_apply)
from .mollifier import MollifierKernel, ParticleEnsemble, kde_at_particles, kde_at_points, make_bump_kernel, scale_kernel
from .particle_system import (DriftSpec, NoiseTape, SimulationPlan, init_particles, pathwise_error, simulate,
                              simulate_limit_sde, step_euler)
from .fpe_solver import DensityPath, FpeConfig, interpolate_density, solve_fpe, step_duhamel
from .error_metrics import (ErrorRecord, RateFit, density_sup_error, fit_rate, lm_omega_norm, tv_error)
from .experiments import (ExperimentConfig, kernel_check, run_convergence, run_cross_alpha, run_pathwise,
                          run_weak)

__version__ = "0.1.0"
