"""Exception types shared across the package."""

from __future__ import annotations


class DrContractsError(Exception):
    """Base class for all package-specific errors."""


class IllPosedProgramError(DrContractsError, ValueError):
    """Program terms admit unbounded nominal gain (pi_r - p*pi_p >= 0)."""


class UnconstrainedContractError(DrContractsError, ValueError):
    """No finite optimum exists (e.g. event probability is zero)."""


class AlignmentError(DrContractsError, ValueError):
    """Empirical samples cannot be paired for index-wise operations."""


class InputFormatError(DrContractsError, ValueError):
    """Malformed input file or configuration (CLI exit code 2)."""


class ModelConsistencyError(DrContractsError, ValueError):
    """Inputs are well-formed but mutually inconsistent (CLI exit code 3)."""
