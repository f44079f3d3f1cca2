"""Nonlinear bosonic frequency probes."""

__version__ = "0.1.0"
