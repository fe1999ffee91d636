"""Class-imbalance laboratory: synthetic tasks, exact oracles, imbalance measures and
logit-perturbation training with meta-learned perturbation weights."""

from ._kernels import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
