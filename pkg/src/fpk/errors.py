"""Exception hierarchy shared by all modules.

Each class carries a short ``code`` used by the command line front end to
pick an exit status and to tag diagnostics.
"""


class FpkError(Exception):
    code = "ERROR"


class ConfigError(FpkError, ValueError):
    code = "CONFIG"


class NumericError(FpkError, ArithmeticError):
    code = "NUMERIC"


class NoConvergenceError(FpkError):
    code = "NO_CONVERGENCE"


class NonPositiveError(FpkError):
    code = "NONPOSITIVE"


class DegenerateError(FpkError):
    code = "DEGENERATE"


class SizeError(FpkError):
    code = "SIZE"


class SingularError(FpkError):
    code = "SINGULAR"


class EmptyWindowError(FpkError):
    code = "EMPTY_WINDOW"
