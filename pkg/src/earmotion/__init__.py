"""Ear-movement detection toolkit.

Builds balanced clip datasets from timed action-unit annotations, classifies
clips with an optical-flow magnitude baseline or with LSTM classifiers over
pre-extracted feature sequences, and evaluates both on clips and on
full-length videos with sliding windows.
"""

__version__ = "0.1.0"
