"""Non-learned pipeline for one-stage open-world proposal generation."""

__version__ = "0.1.0"
