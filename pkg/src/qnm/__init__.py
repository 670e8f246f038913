"""Quantum noise metrology: Fisher information for sensing random displacements."""

__version__ = "0.1.0"
