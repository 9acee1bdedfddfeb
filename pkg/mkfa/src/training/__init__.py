"""Optimization, evaluation and persistence"""

