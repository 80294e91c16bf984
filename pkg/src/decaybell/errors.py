"""Exception hierarchy shared by all modules."""


class DecayBellError(ValueError):
    """Base class for input and data errors raised by this package."""


class InvalidDimensionError(DecayBellError):
    pass


class InvalidInputError(DecayBellError):
    pass


class InvalidTimeError(DecayBellError):
    pass


class InvalidConfigError(DecayBellError):
    pass


class InsufficientDataError(DecayBellError):
    pass
