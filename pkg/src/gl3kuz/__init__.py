"""Exact SL(3,Z) long-element Kloosterman sums, the completed spherical
GL(3) Whittaker function, Kuznetsov-type spectral transforms and their
meromorphic continuation machinery, plus desk-scale cancellation
experiments."""

from .exactmod import egcd, solve_unimodular, RootOfUnityAccumulator

__version__ = "0.1.0"

__all__ = [
    "egcd",
    "solve_unimodular",
    "RootOfUnityAccumulator",
]
