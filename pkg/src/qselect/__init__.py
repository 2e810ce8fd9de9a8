"""Semiclassical quantum selection: Melin values, spin Toeplitz spectra and model operators."""

__version__ = "0.1.0"

from .errors import QSelectError, ValidationError, NumericalError  # noqa: E402,F401
from .symplectic import QuadraticForm, melin_value, symplectic_eigenvalues, williamson_decompose  # noqa: E402,F401
