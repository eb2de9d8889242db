"""Mean-curvature-line configurations on immersed surfaces."""

__version__ = "0.1.0"
