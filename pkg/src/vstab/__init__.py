"""Stability subspaces of an invertible matrix through Q = V*(Q+t)(I+tQ)^{-1}V."""
__version__ = "0.1.0"
