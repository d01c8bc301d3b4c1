"""Exception types raised across the package.

Everything derives from :class:`GsuError` so callers can catch one base
class; the scan driver relies on this to record per-set failures without
aborting a whole run.
"""


class GsuError(Exception):
    """Base class for all errors raised by gsustat."""


class SampleTooSmall(GsuError):
    """Fewer subjects than the statistic supports."""


class ColumnUnusable(GsuError):
    """A genotype column has no observed entries."""

    def __init__(self, index):
        self.index = index
        super().__init__(f"genotype column {index} has no observed entries")


class MissingPhenotype(GsuError):
    """A phenotype entry is missing; phenotype imputation is not supported."""

    def __init__(self, row, col):
        self.row = row
        self.col = col
        super().__init__(f"missing phenotype value at row {row}, column {col}")


class BadWeight(GsuError):
    """A supplied weight is negative or otherwise unusable."""


class GammaSingular(GsuError):
    """The second-moment matrix is singular; supply an explicit coupling matrix."""


class DegenerateWeights(GsuError):
    """All variant weights are zero, so the kernel is undefined."""


class SingularDesign(GsuError):
    """The covariate design matrix is rank deficient."""


class ContextMismatch(GsuError):
    """Two adjusted similarity matrices were built with different projections."""


class UndefinedCorrelation(GsuError):
    """A similarity correlation denominator is zero."""


class DegenerateSpectrum(GsuError):
    """Both eigenvalue lists pruned to nothing; the null law is a point mass."""


class NumericalFailure(GsuError):
    """An iterative numerical routine failed to converge."""


class DegenerateAlternative(GsuError):
    """Power calculation parameters describe no detectable alternative."""


class ParseError(GsuError):
    """A data file could not be parsed."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class OverlappingGenes(GsuError):
    """Gene ranges on one chromosome overlap; grouping would be ambiguous."""

    def __init__(self, offenders):
        self.offenders = list(offenders)
        pairs = ", ".join(f"{a}/{b}" for a, b in self.offenders)
        super().__init__(f"overlapping gene ranges: {pairs}")
