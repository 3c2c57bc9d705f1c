"""Floquet stability of time-periodic reaction-diffusion solutions on evolving surfaces of revolution."""

from .certify import certify_orbit, reconcile
from .construct import fisher_nonlinearity, kernel_mode_state, manufactured_solution
from .evolve import PeriodicOrbit, find_periodic_orbit, period_map, step
from .floquet import classify, floquet_spectrum, linearize, monodromy, principal_eigen
from .geometry import builtin_family, eval_metric, geodesic_curvature, reparametrize, ricci
from .operators import Discretization, RadialGrid, assemble_laplace_beltrami
from .scenario import parse_scenario

__version__ = "0.1.0"
