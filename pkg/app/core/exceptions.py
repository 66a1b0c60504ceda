from typing import Optional


class SimulationError(Exception):
    """Base class for every error raised by the simulator"""

    exit_code = 2


class ConfigError(SimulationError):
    """Invalid parameters, model files or experiment configuration"""

    exit_code = 1


class DimensionMismatchError(ConfigError):
    pass


class CapExceededError(ConfigError):
    pass


class ModelFileError(ConfigError):
    """Model file could not be parsed or validated"""

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        self.line = line
        self.column = column
        if line is not None:
            message = f"line {line}, column {column}: {message}"
        super().__init__(message)


class PhysicsError(SimulationError):
    """A protocol assumption or numerical check was violated"""

    exit_code = 2


class OutputError(SimulationError):
    """Results could not be written or read back"""

    exit_code = 3
