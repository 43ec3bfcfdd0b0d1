"""Workbench for lineup-based residual diagnostics.

Simulates regression data with controlled model violations, runs the usual
misspecification tests, renders lineups of residual plots, collects human
evaluations over HTTP, and turns picks into visual p-values, effect sizes,
and power curves.
"""

__version__ = "0.1.0"

from .kernels import BACKEND  # noqa: F401
