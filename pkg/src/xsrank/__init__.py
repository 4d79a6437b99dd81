"""Cross-sectional stock ranking: data synthesis, model, training, backtest."""

__version__ = "0.1.0"

from .kernels import BACKEND as KERNEL_BACKEND
