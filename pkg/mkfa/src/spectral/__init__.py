"""Frequency-domain analyses"""

