"""Reduced-order forecasting testbed.

Synthetic advection-diffusion snapshot generation, truncated-PCA model
reduction, and side-by-side training of a classic and an adversarially
trained LSTM forecaster with autoregressive rollout evaluation.
"""

__version__ = "0.1.0"
