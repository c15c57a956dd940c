"""Exceptions raised by pytdp.

Every error carries the process exit code the CLI uses for it, so scripts
driving `pytdp` can tell bad input from bad configuration.
"""


class TDPError(Exception):
    "base class for all pytdp errors"
    exit_code: int = 3


class InputError(TDPError, ValueError):
    "malformed or out-of-range data (CSV rows, e-values, index sets)"
    exit_code = 1


class SizeError(InputError):
    "an exhaustive computation was asked for more hypotheses than it accepts"


class ConfigError(TDPError, ValueError):
    "invalid parameters: alpha, family, scenario, snapshot compatibility"
    exit_code = 2


class NumericalError(TDPError, ArithmeticError):
    "a numeric kernel failed to converge or produced NaN"
    exit_code = 3


class OracleMismatch(TDPError):
    "shortcut and exhaustive closed testing disagree"
    exit_code = 4
