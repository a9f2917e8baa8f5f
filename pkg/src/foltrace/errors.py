"""Exception types.  Validation failures name the invariant that broke."""

from __future__ import annotations


class FoltraceError(Exception):
    """Base class for all package errors."""


class ModelValidationError(FoltraceError):
    """A model invariant failed at construction time."""

    invariant = "model"


class LeafBasisRankError(ModelValidationError):
    invariant = "leaf_basis_rank"


class MetricNotSPDError(ModelValidationError):
    invariant = "metric_spd"


class DriftNotTransverseError(ModelValidationError):
    invariant = "drift_transverse"


class DriftTooStrongError(ModelValidationError):
    invariant = "drift_bound"


class ConormalValidationError(FoltraceError):
    """Covector has a leafwise component above tolerance, or vanishes."""


class ShiftNotLeafwiseError(FoltraceError):
    """Holonomy shift does not lie in the leaf subspace."""


class BasePointMismatchError(FoltraceError):
    """Transport applied to a covector based away from the arrow's target."""


class KernelValidationError(FoltraceError):
    """Kernel data violates an invariant (reality, support, quadrature)."""


class QuadratureError(FoltraceError):
    """A certified quadrature failed to reach its requested accuracy."""


class SpectralBudgetError(FoltraceError):
    """Enumeration would exceed the configured memory budget."""

    def __init__(self, projected: int, budget: int):
        self.projected = projected
        self.budget = budget
        super().__init__(
            f"projected spectral line count {projected} exceeds budget {budget}"
        )


class SpectralResolutionError(FoltraceError):
    """Cutoff or grid too small for the requested probe."""


class CleannessViolationError(FoltraceError):
    """Density requested on a component that failed the cleanness check."""


class MaslovConsistencyError(FoltraceError):
    """Index samples on one component disagree; carries the samples."""

    def __init__(self, samples):
        self.samples = list(samples)
        super().__init__(f"index samples disagree across component: {self.samples}")


class ConfigError(FoltraceError):
    """Experiment configuration rejected."""


class OutputExistsError(FoltraceError):
    """Refusing to overwrite an existing output path."""
