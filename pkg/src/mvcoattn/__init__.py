"""Adversarial co-attention multi-view subspace learning on a small numpy autodiff core."""

__version__ = "0.1.0"
