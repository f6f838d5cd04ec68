"""Renewal Lab - numerical laboratory for strong renewal theorems on heavy-tailed lattice walks."""

__version__ = "0.1.0"
