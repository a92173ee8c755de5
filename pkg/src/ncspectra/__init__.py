"""Exact moments, algebraic Cauchy transforms and spectra of polynomials in free variables."""

__version__ = "0.1.0"
