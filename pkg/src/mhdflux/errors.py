"""Exception types shared across the package."""


class MhdFluxError(Exception):
    """Base class for all package-specific errors."""


class BlowUp(MhdFluxError):
    """Solver produced non-finite or runaway field values (dt too large)."""

    def __init__(self, time: float, max_value: float):
        self.time = time
        self.max_value = max_value
        super().__init__(f"solver blow-up at t={time:.6g} (max |field| = {max_value:.3g})")


class ScaleTooLarge(MhdFluxError):
    """Requested cutoff support does not fit in half the periodic box."""


class BoundViolation(MhdFluxError):
    """Measured refined-bound constant exceeds the requested target."""


class ResolutionTooCoarse(MhdFluxError):
    """Grid does not resolve the requested partition scale."""


class EnsembleInvalid(MhdFluxError):
    """Candidate ensemble fails one of the multiplicity/cover properties."""


class TooFewSnapshots(MhdFluxError):
    """Snapshot series is too sparse in time for the requested quadrature."""


class MismatchedDiffusion(MhdFluxError):
    """Dynamic decomposition identity requires equal viscosity and resistivity."""


class DegeneratePalinstrophy(MhdFluxError):
    """Palinstrophy is zero; scale quantities are undefined."""


class ScaleOutOfRange(MhdFluxError):
    """Requested analysis scale falls outside the admissible range."""


class ConfigError(MhdFluxError):
    """Malformed or inconsistent run configuration."""
