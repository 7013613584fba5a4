"""Stochastic tip-cell angiogenesis: particle simulator, kinetic mean-field
solver and the numerical checks that tie them together."""

__version__ = "0.1.0"
