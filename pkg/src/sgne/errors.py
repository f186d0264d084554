"""Exception hierarchy shared by all modules.

Each class carries the CLI exit category it maps to.
"""


class SgneError(Exception):
    exit_code = 1


class ConfigError(SgneError, ValueError):
    exit_code = 2


class DomainError(SgneError, ValueError):
    """An argument lies outside the domain where the operation is defined."""

    exit_code = 2


class EdgeListParseError(SgneError, ValueError):
    exit_code = 2

    def __init__(self, line_number, message):
        self.line_number = line_number
        super().__init__(f"line {line_number}: {message}")


class EmptyGraphError(SgneError, ValueError):
    exit_code = 2


class SplitError(SgneError, ValueError):
    exit_code = 2


class DegenerateLabelError(SgneError, ValueError):
    exit_code = 2


class UndefinedSimilarityError(SgneError, ValueError):
    exit_code = 4


class NumericError(SgneError, ArithmeticError):
    """Non-finite value produced during loss or gradient evaluation."""

    exit_code = 4

    def __init__(self, message, pair=None, epoch=None, batch=None):
        self.pair = pair
        self.epoch = epoch
        self.batch = batch
        parts = [message]
        if pair is not None:
            parts.append(f"pair={pair}")
        if epoch is not None:
            parts.append(f"epoch={epoch}")
        if batch is not None:
            parts.append(f"batch={batch}")
        super().__init__(" ".join(parts))
