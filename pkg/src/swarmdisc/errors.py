"""Exceptions shared across the package."""


class ContractError(ValueError):
    """An operation was called with arguments violating its contract."""


class PlacementError(ContractError):
    """Initial agent placement failed after the retry budget (overcrowded world)."""
