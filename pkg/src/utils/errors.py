"""Exception hierarchy shared by the library and the command line."""

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class ToktideError(Exception):
    """Base class for all toktide failures."""

    exit_code = 1


class ConfigError(ToktideError, ValueError):
    """Configuration failed schema validation or could not be read."""

    exit_code = EXIT_CONFIG


class DataError(ToktideError, ValueError):
    """Corpus, manifest or artifact content is missing or inconsistent."""

    exit_code = EXIT_DATA


class NumericalError(ToktideError, ArithmeticError):
    """Non-finite values or an unreachable training target."""

    exit_code = EXIT_NUMERICAL


def exit_code_for(exc: BaseException) -> int:
    return getattr(exc, "exit_code", 1)
