class MkfitError(Exception):
    """Base class for every error raised by mkfit"""


class ArgumentError(MkfitError, ValueError):
    """Invalid argument to a library operation"""


class DegeneracyError(MkfitError):
    """Geometry with (numerically) zero area or length"""


class TopologyError(MkfitError):
    """Self-intersecting or otherwise non-simple polygon"""


class NumericalError(MkfitError):
    """A linear system or root solve failed"""


class ConfigError(MkfitError):
    """Run-config file failed schema validation"""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key


class StageError(MkfitError):
    """A sub-step of an evolution step failed"""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
