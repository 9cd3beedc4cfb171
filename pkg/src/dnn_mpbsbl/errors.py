"""Exception hierarchy shared by every module."""


class MpbsblError(Exception):
    """Base class for all domain errors raised by the package."""


class DimensionError(MpbsblError, ValueError):
    pass


class CapacityError(MpbsblError, ValueError):
    pass


class ConstructionError(MpbsblError, RuntimeError):
    pass


class NumericalError(MpbsblError, FloatingPointError):
    pass


class FormatError(MpbsblError, ValueError):
    pass


class FingerprintError(MpbsblError, ValueError):
    pass


class MaskError(DimensionError):
    """A weight was placed outside its factor-graph connectivity mask."""


class CacheMismatchError(MpbsblError, ValueError):
    pass


class SingularityError(MpbsblError, ArithmeticError):
    pass


class DegenerateSampleError(MpbsblError, ValueError):
    pass


class ConfigError(MpbsblError, ValueError):
    """Malformed or unknown entry in a key=value config file."""
