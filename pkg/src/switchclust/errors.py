"""Exception and warning types shared across the package."""


class SwitchClustError(Exception):
    """Base class for errors raised by this package."""


class DegenerateCovariance(SwitchClustError):
    """A covariance matrix is not positive definite, even after jitter."""


class NumericalUnderflow(SwitchClustError):
    """A probability normalizer vanished during a recursion."""


class DegenerateCluster(SwitchClustError):
    """A cluster received essentially no posterior responsibility."""


class SingleClusterError(SwitchClustError):
    """An operation that needs at least two clusters saw only one."""


class SeparationWarning(UserWarning):
    """Logistic coefficients are diverging; the data look (quasi-)separable."""


class PanelFormatError(SwitchClustError):
    """A panel file violates the expected schema."""


class DuplicateTimeError(PanelFormatError):
    """The same (object, time) pair appears more than once."""


class GapError(PanelFormatError):
    """An object's time index is not contiguous from 1."""


class RaggedCovariateError(PanelFormatError):
    """Covariate cells are present for some rows but missing for others."""


class NonNumericCellError(PanelFormatError):
    """A cell that must be numeric could not be parsed."""


class ZeroVarianceError(PanelFormatError):
    """A raw variable is constant at some time point and cannot be z-scored."""
