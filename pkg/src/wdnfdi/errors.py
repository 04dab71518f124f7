"""Exception hierarchy; ``exit_code`` is what the CLI returns for each."""


class WdnError(Exception):
    exit_code = 1


class ValidationError(WdnError, ValueError):
    exit_code = 2


class ParseError(ValidationError):
    """Malformed input file (message carries the line number)."""


class ConfigError(ValidationError):
    pass


class NumericalError(WdnError, ArithmeticError):
    exit_code = 3


class ModelStateError(WdnError, RuntimeError):
    exit_code = 2
