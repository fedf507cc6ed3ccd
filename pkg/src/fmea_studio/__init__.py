"""Interactive, retrieval-grounded FMEA tree builder for industrial equipment."""

__version__ = "0.1.0"
