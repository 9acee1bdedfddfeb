"""Four-stage MkfaNet assembly"""

