"""Unit commitment scheduling: stochastic/deterministic MIP, RL agents and hybrid warm starts."""

__version__ = "0.1.0"
