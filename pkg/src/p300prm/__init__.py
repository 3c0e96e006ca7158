"""Elman RNN with a post-recurrent head for P300 detection, plus explainability tools."""

__version__ = "0.1.0"
