"""Exception types shared across the package."""


class EnclosureError(Exception):
    """Base class for package errors."""


class ConfigError(EnclosureError, ValueError):
    """Invalid model, grid or run configuration."""


class SolverError(EnclosureError, RuntimeError):
    """Forward or fixed-point solve failed."""


class NonContractionError(SolverError):
    """The Neumann series for the CGO remainder does not contract."""


class EmptyHullError(EnclosureError):
    """Half-plane intersection stayed empty after all relaxations."""
