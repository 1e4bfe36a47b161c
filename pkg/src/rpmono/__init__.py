"""Two-point function inequalities for reflection-positive spin and loop models."""

__version__ = "0.1.0"
