"""Kick-engineered decoherence on a two-qubit register.

A system qubit coupled to a single environment qubit by a sigma_z sigma_z
interaction loses coherence when the environment is struck by a train of
small random rotations ("kicks").  This package simulates that process by
Monte Carlo trajectory ensembles and by the exact averaged kick map, layers
CPMG / Uhrig dynamical decoupling on top, inverts CPMG decay rates into a
noise spectral density, and reconstructs single-qubit process matrices.
"""

from .core import (
    RelaxationParams,
    SpinSystem,
    expectation,
    free_phases,
    free_propagator,
    partial_trace,
    pauli,
    tensor,
    transverse_init,
)
from .kicks import (
    DecoherenceSeries,
    KickParams,
    RatePoint,
    SuperopCoeffs,
    closed_form_f,
    gamma_of_theta,
    monte_carlo_f,
    t2_of_kick_rate,
)
from .sequences import (
    DDParams,
    PulseEvent,
    Timeline,
    build_timeline,
    cpmg_times,
    run_timeline_ensemble,
    udd_times,
)
from .spectroscopy import (
    DecayCurve,
    ExpFit,
    GaussianFit,
    SpectralPoint,
    SpectralProfile,
    cory_model_spectrum,
    fit_exponential,
    fit_gaussians,
    simulate_decay,
    spectral_density,
    subtract_baseline,
    sweep_spectrum,
)
from .qpt import (
    ChiMatrix,
    OperatorBasis,
    ProcessSpec,
    apply_process,
    chi_zz_report,
    input_states,
    process_tomography,
    reconstruct_chi,
    validate_channel,
)
from .config import ExperimentConfig, load_config, parse_config, serialize_config

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "SpinSystem",
    "RelaxationParams",
    "pauli",
    "tensor",
    "partial_trace",
    "free_phases",
    "free_propagator",
    "expectation",
    "transverse_init",
    "KickParams",
    "SuperopCoeffs",
    "DecoherenceSeries",
    "RatePoint",
    "gamma_of_theta",
    "monte_carlo_f",
    "closed_form_f",
    "t2_of_kick_rate",
    "DDParams",
    "PulseEvent",
    "Timeline",
    "cpmg_times",
    "udd_times",
    "build_timeline",
    "run_timeline_ensemble",
    "DecayCurve",
    "ExpFit",
    "SpectralPoint",
    "SpectralProfile",
    "GaussianFit",
    "simulate_decay",
    "fit_exponential",
    "spectral_density",
    "sweep_spectrum",
    "cory_model_spectrum",
    "subtract_baseline",
    "fit_gaussians",
    "OperatorBasis",
    "ChiMatrix",
    "ProcessSpec",
    "input_states",
    "apply_process",
    "reconstruct_chi",
    "process_tomography",
    "chi_zz_report",
    "validate_channel",
    "ExperimentConfig",
    "parse_config",
    "serialize_config",
    "load_config",
]
