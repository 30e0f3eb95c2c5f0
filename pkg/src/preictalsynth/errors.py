"""Exception types shared across the package.

The CLI maps these onto process exit codes: ConfigError -> 2,
DataError (and subclasses) -> 3, TrainingDiverged -> 4.
"""


class ShapeError(ValueError):
    """An operation received arrays whose shapes violate its contract."""


class ConfigError(Exception):
    """A configuration file, key, or value is unusable."""


class DataError(Exception):
    """Input data is missing, malformed, or insufficient."""


class EdfParseError(DataError):
    """EDF bytes violate the format. Carries the byte offset of the fault."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"byte {offset}: {message}")


class SummaryParseError(DataError):
    """Annotation summary text is malformed. Carries the 1-based line number."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")


class MissingGradient(RuntimeError):
    """An optimizer step was requested before gradients were populated."""


class TrainingDiverged(RuntimeError):
    """A loss became non-finite. Carries the epoch index where it happened."""

    def __init__(self, epoch: int, message: str = ""):
        self.epoch = epoch
        super().__init__(message or f"non-finite loss at epoch {epoch}")
