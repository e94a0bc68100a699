"""Exception hierarchy shared by the codec modules.

Each class carries the process exit code the CLI maps it to.
"""


class MV3CError(Exception):
    exit_code = 3


class ArgumentError(MV3CError, ValueError):
    exit_code = 2


class DimensionError(ArgumentError):
    """Volume extent cannot support the requested decomposition depth."""


class FormatError(MV3CError):
    exit_code = 3


class UnsupportedFormatError(FormatError):
    pass


class CorruptionError(FormatError):
    def __init__(self, message, bit_offset=None):
        if bit_offset is not None:
            message = f"{message} (at bit offset {bit_offset})"
        super().__init__(message)
        self.bit_offset = bit_offset


class StructureError(FormatError):
    pass


class DataError(MV3CError, ValueError):
    exit_code = 3


class DomainError(DataError):
    pass


class DegenerateSpreadError(DataError):
    pass


class RateError(MV3CError):
    exit_code = 4

    def __init__(self, message, achievable=None):
        super().__init__(message)
        self.achievable = achievable


class OracleError(MV3CError):
    exit_code = 5

    def __init__(self, message, output=""):
        super().__init__(message)
        self.output = output
