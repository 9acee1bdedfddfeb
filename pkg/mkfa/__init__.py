"""MkfaNet desk-scale reference"""

__version__ = "1.0.0"
