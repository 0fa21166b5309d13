"""Random walks on random conductance models."""
__version__ = "0.1.0"
