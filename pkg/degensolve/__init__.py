"""Solver and verification harness for singular degenerate operator equations"""

__version__ = "0.1.0"
