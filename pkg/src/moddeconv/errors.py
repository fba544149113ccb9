"""Shared exception types."""


class DimensionError(ValueError):
    """Incompatible or invalid problem dimensions."""


class DomainError(ValueError):
    """Input outside the mathematical domain of an operation."""
