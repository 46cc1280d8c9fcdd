"""Maxwell-Bloch simulation of slow-light enhanced two-pulse photon echoes."""

__version__ = "0.1.0"
