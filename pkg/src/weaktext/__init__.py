"""Weakly supervised word detection by aggregating pixel-level labeling functions."""

from .errors import ConfigError, DataError, NumericalError, RegistryMismatch, WeakTextError
from .imgproc import WordBox

__version__ = "0.1.0"

__all__ = ["ConfigError", "DataError", "NumericalError", "RegistryMismatch", "WeakTextError", "WordBox"]
