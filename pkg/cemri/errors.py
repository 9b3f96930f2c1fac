"""Exception hierarchy for the cemri package.

Every error raised at an orchestration boundary (dataset I/O, configuration,
checkpoints, training) derives from ``CemriError`` and carries the process
exit code the command-line front end reports for it. The numerical kernels
(wdm, attention, generator, adversarial, metrics) raise plain ``ValueError``
for shape contract violations; the cli maps those to usage errors.

Classes:
    CemriError: Base class, ``exit_code`` 1
    ConfigError: Invalid configuration or phantom spec, ``exit_code`` 2
    DataError: Dataset, manifest or checkpoint problem, ``exit_code`` 3
    TensorFormatError: Malformed TNSR file, ``exit_code`` 3
    NumericFault: Non-finite loss or intermediate, ``exit_code`` 4

Example:
    >>> from cemri.errors import DataError
    >>> try:
    ...     raise DataError("case 'case_0003' not found in manifest")
    ... except DataError as e:
    ...     print(e.exit_code)
    3
"""


class CemriError(Exception):
    """Base class for all cemri errors."""
    exit_code: int = 1


class ConfigError(CemriError, ValueError):
    """Invalid configuration value, unknown key or invalid phantom spec."""
    exit_code = 2


class DataError(CemriError, ValueError):
    """Missing or inconsistent dataset, manifest or checkpoint content."""
    exit_code = 3


class TensorFormatError(DataError):
    """TNSR file with bad magic, version, rank or a truncated payload."""


class NumericFault(CemriError, ArithmeticError):
    """A loss or intermediate tensor became non-finite."""
    exit_code = 4


__all__ = [
    'CemriError',
    'ConfigError',
    'DataError',
    'TensorFormatError',
    'NumericFault',
]
