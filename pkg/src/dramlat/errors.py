"""Exception types shared across the package."""


class DramlatError(Exception):
    """Base class for all package errors."""


class ConfigError(DramlatError, ValueError):
    pass


class AddressError(DramlatError, ValueError):
    pass


class IllegalCommand(DramlatError):
    pass


class TransferError(DramlatError):
    pass


class ModuleRejected(DramlatError):
    """The module shows errors at the standard refresh interval."""


class TraceError(DramlatError, ValueError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(f"{where}{message}")
