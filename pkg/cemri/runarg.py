"""Command line option parser for cemri logging switches.

This module parses the logging switches understood by every cemri entry
point. They are read straight from ``sys.argv`` at import time by the debug
module, before the command-line front end builds its argparse parser, so
the switches can be combined with any subcommand.

An option swallows the ``key=value`` tokens that follow it, up to the next
recognized option. ``strip_options`` removes those tokens again so argparse
never sees them.

Functions:
    exist_option: Check if a specific option exists in command line
    get_option: Extract option values and parameters from command line
    get_var: Parse variable assignments from option parameters
    strip_options: Drop logging switches and their parameters from argv
    default_output_root: Output root from the CEMRI_OUT_ROOT environment

Example:
    >>> # python -m cemri train --run-log log_level=INFO --data ./phantoms
    >>> if exist_option(Options.RUN_LOG):
    ...     run_options = get_option(Options.RUN_LOG)
    ...     level = get_var(run_options, "log_level")
"""
import os
import sys
import enum


OUTPUT_ROOT_ENV = "CEMRI_OUT_ROOT"


class Options(enum.Enum):
    """Available logging switches for cemri entry points.

    Attributes:
        RUN_LOG: Enable the experiment log (training progress, checkpoints)
        INTERNAL_LOG: Enable the internal log (shapes, tensor I/O details)
    """
    RUN_LOG = '--run-log'
    INTERNAL_LOG = '--internal-log'


def exist_option(option: Options, argv: list[str] | None = None) -> bool:
    """Check if a specific option exists in the command line arguments.

    Args:
        option: The option to look for.
        argv: Argument list to search (default: ``sys.argv``).

    Returns:
        True if the option is present.
    """
    argv = sys.argv if argv is None else argv

    return option.value in argv


def get_option(option: Options, argv: list[str] | None = None) -> list[str]:
    """Extract an option and the parameters that follow it.

    The slice runs from the option to the next recognized option, or to the
    end of the arguments.

    Args:
        option: The option to extract values for.
        argv: Argument list to search (default: ``sys.argv``).

    Returns:
        The option token followed by its parameters, or an empty list.

    Example:
        >>> get_option(Options.RUN_LOG,
        ...            ['x', '--run-log', 'log_level=INFO', '--internal-log'])
        ['--run-log', 'log_level=INFO']
    """
    argv = sys.argv if argv is None else argv

    if option.value not in argv:
        return []

    option_list = argv[argv.index(option.value):]

    for other in Options:
        if other == option:
            continue

        if other.value in option_list:
            option_list = option_list[0: option_list.index(other.value)]

    return option_list


def get_var(option_list: list[str], varname: str) -> str | None:
    """Parse a ``varname=value`` assignment from option parameters.

    Args:
        option_list: Parameters returned by ``get_option``.
        varname: The variable name, without the ``=`` sign.

    Returns:
        The assigned value, or None when the variable is absent.

    Example:
        >>> get_var(['--run-log', 'log_level=DEBUG'], 'log_level')
        'DEBUG'
    """
    prefix = f"{varname}="

    for option_var in option_list:
        if option_var.startswith(prefix):
            return option_var[len(prefix):]

    return None


def strip_options(argv: list[str]) -> list[str]:
    """Remove logging switches and their ``key=value`` parameters.

    Only ``key=value`` tokens directly following a switch are dropped, so
    regular flags such as ``--out`` keep their values.

    Args:
        argv: Argument list without the program name.

    Returns:
        A new list suitable for ``argparse``.
    """
    switches = {option.value for option in Options}
    stripped = []
    swallowing = False

    for token in argv:
        if token in switches:
            swallowing = True
            continue

        if swallowing and "=" in token and not token.startswith("-"):
            continue

        swallowing = False
        stripped.append(token)

    return stripped


def default_output_root() -> str:
    """Return the default output root (``$CEMRI_OUT_ROOT`` or ``.``)."""
    return os.environ.get(OUTPUT_ROOT_ENV, ".")


__all__ = [
    'Options',
    'OUTPUT_ROOT_ENV',
    'exist_option',
    'get_option',
    'get_var',
    'strip_options',
    'default_output_root',
]
