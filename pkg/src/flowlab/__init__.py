"""Numerical toolkit for flows, Markov semigroups and their compositions."""

from .reports import Report

__all__ = ["Report"]
__version__ = "0.1.0"
