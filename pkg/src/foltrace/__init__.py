"""foltrace: wave-trace asymptotics on flat foliated torus models.

The package computes both sides of the trace comparison for the operator
P = sqrt(I + Delta_H + c.D_H) on a linearly foliated flat torus: the
spectral side (exact eigenvalue lattice, kernel-weighted smoothed trace,
singularity scan, amplitude ladders) and the geometric side (transverse
flow, relative periods, fixed-point densities, Maslov indices, leading
coefficients), and verifies that they agree.
"""

from .errors import FoltraceError
from .geometric import (
    RelativePeriodComponent,
    cleanness_check,
    find_relative_periods,
    fixed_point_density,
    flow,
    leading_coefficient,
    saturation_check,
)
from .harness import (
    ComparisonReport,
    ExperimentConfig,
    config_from_yaml,
    config_to_yaml,
    emit_outputs,
    load_config,
    make_config,
    run_experiment,
)
from .kernels import BumpProfile, GroupoidKernel, TrigPolynomial, build_kernel, kernel_eval
from .maslov import (
    assemble_R,
    intersection_number,
    maslov_index,
    signature,
    solve_generating_function,
)
from .model import (
    ConormalVector,
    FlatFoliatedModel,
    HolonomyElement,
    build_model,
    conormal,
    holonomy_element,
    holonomy_transport,
    subprincipal_p,
    transverse_symbol,
    verify_holonomy_invariance,
)
from .spectral import (
    GaussianProbe,
    amplitude_probe,
    enumerate_spectrum,
    off_period_decay,
    singularity_scan,
    smoothed_trace,
    spectral_weight,
)

__version__ = "0.1.0"

__all__ = [
    "BumpProfile",
    "ComparisonReport",
    "ConormalVector",
    "ExperimentConfig",
    "FlatFoliatedModel",
    "FoltraceError",
    "GaussianProbe",
    "GroupoidKernel",
    "HolonomyElement",
    "RelativePeriodComponent",
    "TrigPolynomial",
    "amplitude_probe",
    "assemble_R",
    "build_kernel",
    "build_model",
    "cleanness_check",
    "config_from_yaml",
    "config_to_yaml",
    "conormal",
    "emit_outputs",
    "enumerate_spectrum",
    "find_relative_periods",
    "fixed_point_density",
    "flow",
    "holonomy_element",
    "holonomy_transport",
    "intersection_number",
    "kernel_eval",
    "leading_coefficient",
    "load_config",
    "make_config",
    "maslov_index",
    "off_period_decay",
    "run_experiment",
    "saturation_check",
    "signature",
    "singularity_scan",
    "smoothed_trace",
    "solve_generating_function",
    "spectral_weight",
    "subprincipal_p",
    "transverse_symbol",
    "verify_holonomy_invariance",
]
