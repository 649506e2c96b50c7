"""
sdsmatch - Scale-adaptive template matching package.

This package provides multi-scale template matching with the scalable
diversity similarity measure and its baselines, a benchmark harness and
Monte-Carlo studies of the measures on random point sets.
"""

__version__ = "0.1.0"
