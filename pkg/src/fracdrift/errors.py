"""Exception taxonomy shared across the package."""


class FracdriftError(Exception):
    """Base class for all package errors."""


class ParameterError(FracdriftError, ValueError):
    """A numerical parameter is outside its admissible range."""


class ConfigurationError(FracdriftError, ValueError):
    """Inputs are structurally incompatible (grids, time grids, config files)."""


class UnsupportedKernelForm(FracdriftError, TypeError):
    """The kernel form cannot be used with the requested operation."""


class DivergenceError(FracdriftError, RuntimeError):
    """A fixed-point iteration left its certified contraction regime."""


class LineageError(FracdriftError, ValueError):
    """Ensembles do not share noise-bundle lineage, so a coupled distance
    would not bound the coupling infimum."""
