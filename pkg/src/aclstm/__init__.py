"""Amplitude-conditioned LSTM behavioral models for wideband power amplifiers."""

__version__ = "0.1.0"
