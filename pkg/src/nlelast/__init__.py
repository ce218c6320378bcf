"""Nonlocal linearized peridynamics: kernels, lattice operators, Fourier symbols, solvers and diagnostics."""
from .errors import (CoercivityViolationError, ConditionViolatedError, HypothesisError, HypothesisViolatedError,
                     InequalityViolationError, InvalidArgumentError, InvalidCutoffError, MemoryGuardError,
                     NearDegenerateSymbolError, NlelastError, NonconvergenceError, SingularFrequencyError,
                     UnsupportedKernelError, UsageError)
from .geometry import Cap, DomainMask, DoubleCone, Grid, HalfCone, cone_surface_measure, cone_tail_mass
from .kernels import (FractionalCone, IntegrableCone, MixedOrder, VariableOrder, check_hypotheses, example1,
                      example2, make_kernel)
from .operators import GridField, apply_Ln, assemble_stiffness, bilinear_form, energy_seminorm

__version__ = "0.1.0"
