"""Neural sequence labeling with position-aware self-attention fusion layers."""

__version__ = "0.1.0"
