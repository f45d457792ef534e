"""Pseudospectral toolkit for the dispersion-managed nonlinear Schroedinger equation."""

__version__ = "0.1.0"
