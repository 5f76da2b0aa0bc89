"""Multi-stage training of CNN feature extractors over transformed sensor windows."""

__version__ = "0.1.0"

from .tensor import FiniteError, Parameter, ShapeError, Tape, TapeError, Tensor

__all__ = ["Tensor", "Parameter", "Tape", "ShapeError", "FiniteError", "TapeError"]
