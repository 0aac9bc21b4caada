"""Numerical laboratory for parabolic equations with singular drifts."""
from heatlab.field import (
    DiffusionMatrix,
    Grid,
    ScalarField,
    TimeGrid,
    VectorField,
    frac_power,
    gaussian_kernel,
    gaussian_on_grid,
    heat_mollify,
    spectral_gradient,
    spectral_laplacian,
)
from heatlab.drift.spec import DriftSpec, PotentialSpec
from heatlab.drift.kato import kato_norm
from heatlab.evolution import (
    EvolutionProblem,
    KernelEstimate,
    StabilityError,
    duhamel_residual,
    evolve,
    evolve_adjoint,
    heat_kernel_estimate,
    moser_norm_probe,
)
from heatlab.nash import GaussianFit, gaussian_envelope_fit, nash_entropy_moment, nash_G

__version__ = "0.1.0"

__all__ = [
    "DiffusionMatrix",
    "DriftSpec",
    "EvolutionProblem",
    "GaussianFit",
    "Grid",
    "KernelEstimate",
    "PotentialSpec",
    "ScalarField",
    "StabilityError",
    "TimeGrid",
    "VectorField",
    "duhamel_residual",
    "evolve",
    "evolve_adjoint",
    "frac_power",
    "gaussian_envelope_fit",
    "gaussian_kernel",
    "gaussian_on_grid",
    "heat_kernel_estimate",
    "heat_mollify",
    "kato_norm",
    "moser_norm_probe",
    "nash_G",
    "nash_entropy_moment",
    "spectral_gradient",
    "spectral_laplacian",
]
