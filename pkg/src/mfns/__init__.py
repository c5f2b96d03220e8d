"""Incompressible Navier-Stokes on the 2-torus as the mean of an interacting
ensemble of stochastically transported spectral vector fields."""

__version__ = "0.1.0"

from .errors import BlowUpError, ConfigurationError, ConsistencyError, DataError
from .meanfield import SimConfig, drift_ito, drift_strat, run
from .noise import apply_covariance, apply_noise, build_basis
from .reference import l2_error, ns_reference_step, taylor_green, velocity_from_vorticity
from .spectral import SpectralScalarField, SpectralVectorField

__all__ = [
    "BlowUpError",
    "ConfigurationError",
    "ConsistencyError",
    "DataError",
    "SimConfig",
    "SpectralScalarField",
    "SpectralVectorField",
    "apply_covariance",
    "apply_noise",
    "build_basis",
    "drift_ito",
    "drift_strat",
    "l2_error",
    "ns_reference_step",
    "run",
    "taylor_green",
    "velocity_from_vorticity",
]
