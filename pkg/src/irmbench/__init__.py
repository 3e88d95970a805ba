"""ERM and invariant risk minimization on linear structural equation models."""

__version__ = "0.1.0"
