"""Numerical toolkit for energy growth of an asteroid near Jupiter's L1/L2 points
under the influence of a distant resonant planet (restricted planar four-body model)."""

__version__ = "0.1.0"
