"""
Electromagnetically consistent communication models package marker.
"""

__version__ = "0.4.0"
