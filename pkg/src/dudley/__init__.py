"""Relativistic diffusion on the Poincare group: simulation and potential-theory checks."""
__version__ = "0.1.0"
