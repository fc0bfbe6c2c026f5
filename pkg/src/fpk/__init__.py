"""Finite-volume numerical lab for the Fokker-Planck operator L u = div(grad u + E u)."""

__version__ = "0.1.0"
