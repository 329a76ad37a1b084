"""Analysis and state-feedback synthesis for constrained switched linear systems."""

__version__ = "0.1.0"
