"""Exception hierarchy shared by the glshift modules."""

from __future__ import annotations

from typing import TYPE_CHECKING

if TYPE_CHECKING:
    from glshift.training import TrainTrace


class GLShiftError(Exception):
    """Base class of every error raised by glshift."""


class ValidationError(GLShiftError, ValueError):
    """Invalid inputs: broken simplexes, mismatched dimensions, out-of-range parameters."""


class SchemaError(ValidationError):
    """A data file does not follow its documented layout."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None) -> None:
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line


class ConfigError(ValidationError):
    """Unknown or invalid experiment configuration entries."""


class QuadratureError(ValidationError):
    """The deterministic quadrature oracle cannot be applied (dimension or grid coverage)."""


class ClassAbsentError(GLShiftError):  # noqa: N818
    """A class with positive weight has no (or too few) samples on one side."""

    def __init__(self, label: int, side: str) -> None:
        super().__init__(f"class {label} is absent from the {side} samples")
        self.label = label
        self.side = side


class SolverDidNotConverge(GLShiftError):  # noqa: N818
    def __init__(self, residual: float, iterations: int) -> None:
        super().__init__(
            f"BBSE solver stopped after {iterations} iterations with KKT residual {residual:.3e}"
        )
        self.residual = residual
        self.iterations = iterations


class NonFiniteError(GLShiftError, FloatingPointError):
    def __init__(self, layer: str) -> None:
        super().__init__(f"non-finite values produced by layer {layer}")
        self.layer = layer


class TrainingDiverged(GLShiftError):  # noqa: N818
    """Training produced a non-finite loss; ``trace`` holds the rows recorded so far."""

    def __init__(self, message: str, trace: TrainTrace) -> None:
        super().__init__(message)
        self.trace = trace
