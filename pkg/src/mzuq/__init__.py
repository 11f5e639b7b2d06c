"""Mori-Zwanzig reduced models for polynomial-chaos Galerkin systems."""

__version__ = "0.1.0"
