"""Heat kernels, Hardy constants and eigenvalue bounds for Schrödinger operators on exterior domains."""

__version__ = "0.1.0"

from .assembly import (AssembledForm, AssemblyError, OperatorHandle, assemble, assemble_weighted,
                       domination_order_check, transform_refinement, transform_residual)
from .bounds import (BoundEnvelope, DecayFit, VolumeFunctional, eval_envelope, fit_constants, fit_decay,
                     harnack_weight_check, volume, volume_bounds_sweep)
from .grid import Boundary, DomainSpec, ModeSet, RadialGrid, build_grid, truncation_time_budget
from .heat import (EigenBasis, KernelEngine, KernelSample, build_engine, eigensolve, kernel_via_timestep,
                   weighted_kernel_identity_check)
from .spectral import (HardyProbe, SpectralReport, count_negative, hardy_constant_lower,
                       hardy_sharpness_sequence, lieb_constant, verify_hclr, verify_hlt,
                       verify_lieb_trace_bound)
