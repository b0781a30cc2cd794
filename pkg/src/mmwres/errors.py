"""Exception hierarchy shared across the package.

Two branches matter for the CLI exit-code contract: ``DataError`` (bad input
files, configs, or arguments; exit code 1) and ``NumericsError`` (a
computation that could not be completed; exit code 2).
"""


class MmwresError(Exception):
    pass


class DataError(MmwresError):
    """Invalid input data, file, or configuration."""


class ParseError(DataError):
    """Malformed input file; message names the offending line."""


class GridError(DataError):
    """Frequency grids that cannot be reconciled."""


class NumericsError(MmwresError):
    """A numerical procedure failed (fit, solve, quadrature)."""


class FitError(NumericsError):
    """Nonlinear fit did not converge or is ill-posed."""


class NoDipError(FitError):
    """No resonance dip found in the supplied sweep."""


class SolveError(NumericsError):
    """Calibration system is degenerate or lacks dynamic range."""


class SingularityError(NumericsError):
    """Pointwise numerical singularity; message carries the frequency index."""
