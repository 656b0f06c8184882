"""Entanglement generation in two driven, decaying qubits under homodyne feedback."""
from ._backend import DEFAULT as BACKEND, HAVE_EXTENSION

__version__ = "0.1.0"

__all__ = ["BACKEND", "HAVE_EXTENSION", "__version__"]
