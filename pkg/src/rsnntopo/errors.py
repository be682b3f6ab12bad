"""Exception hierarchy shared by every module."""


class RsnnError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RsnnError, ValueError):
    """Invalid configuration value; ``field`` names the offending key."""

    def __init__(self, message, field=None):
        super().__init__(message if field is None else f"{field}: {message}")
        self.field = field


class InputDomainError(RsnnError, ValueError):
    pass


class DegenerateTopologyError(RsnnError, ValueError):
    """A layer of the dual representation would be empty."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer


class ParseError(RsnnError, ValueError):
    def __init__(self, message, line=None, path=None):
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}"
        super().__init__(f"{where}: {message}" if where else message)
        self.line = line
        self.path = path


class TrainingError(RsnnError, RuntimeError):
    def __init__(self, message, epoch=None, batch=None):
        super().__init__(f"{message} (epoch={epoch}, batch={batch})")
        self.epoch = epoch
        self.batch = batch


class StageError(RsnnError, RuntimeError):
    """Failure inside an experiment stage; the message is prefixed by the stage tag."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
