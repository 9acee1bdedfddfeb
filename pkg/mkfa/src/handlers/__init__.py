"""Command handlers"""

