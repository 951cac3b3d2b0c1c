"""Jet-based Finsler curvature engine for projective invariants."""

__version__ = "0.1.0"
