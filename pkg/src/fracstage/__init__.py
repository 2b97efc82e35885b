"""Multistage fractional PINN solver for time-fractional subdiffusion."""

from __future__ import annotations

__version__ = "0.1.0"
