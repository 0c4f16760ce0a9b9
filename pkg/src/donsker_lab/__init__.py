"""Numerical laboratory for quantitative invariance principles."""
