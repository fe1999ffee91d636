"""Hot loops with a compiled implementation and a numpy fallback.

The compiled module is used when it was built and ``IMBALANCE_LAB_PURE`` is
not set to a true value; ``BACKEND`` names the active choice.
"""

import os

from . import _pykernels

_force_pure = os.environ.get("IMBALANCE_LAB_PURE", "").lower() in ("1", "true", "yes")

try:
    if _force_pure:
        raise ImportError("pure backend requested")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"

perturbed_ce_batch = _impl.perturbed_ce_batch
ldi_counts = _impl.ldi_counts

__all__ = ["BACKEND", "perturbed_ce_batch", "ldi_counts", "_pykernels"]
