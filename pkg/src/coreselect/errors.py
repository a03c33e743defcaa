"""Exception hierarchy shared by all coreselect modules.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError -> 3, NumericError -> 4, OSError -> 5.
"""


class CoreselectError(Exception):
    """Base class for all coreselect errors."""


class ConfigError(CoreselectError):
    """Invalid parameters, specs, or configuration."""


class DataError(CoreselectError):
    """Invalid or inconsistent data (bad values, shape/size mismatches)."""


class FormatError(DataError):
    """Malformed file content (bad header, wrong field count, bad magic)."""


class NumericError(CoreselectError):
    """Degenerate numeric conditions (e.g. zero total variance)."""
