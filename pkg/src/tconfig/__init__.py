"""Exact and floating-point tools for T_N-configurations, laminates and polyconvex certificates."""

from __future__ import annotations

__version__ = "0.1.0"
