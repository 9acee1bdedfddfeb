"""MkfaNet source code"""

