"""Synthetic real/fake corpus"""

