"""Exception hierarchy shared by every module."""


class SeqtagError(Exception):
    """Base class for all errors raised by seqtag."""


class DimensionError(SeqtagError, ValueError):
    pass


class DomainError(SeqtagError, ValueError):
    pass


class ConfigError(SeqtagError, ValueError):
    pass


class ParseError(SeqtagError, ValueError):
    def __init__(self, message, path=None, line=None):
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)
        self.path = path
        self.line = line


class EvaluationError(SeqtagError, ArithmeticError):
    pass


class TrainingError(SeqtagError, RuntimeError):
    pass
