"""Frequency-attention and sliced-Wasserstein feature distillation on a from-scratch autodiff core."""

__version__ = "0.1.0"
