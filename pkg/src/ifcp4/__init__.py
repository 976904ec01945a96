"""Information-flow analysis for a mini-P4 language."""

__version__ = "0.1.0"
