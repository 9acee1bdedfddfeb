"""Dense tensors and reverse-mode differentiation"""

