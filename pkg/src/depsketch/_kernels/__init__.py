"""Hot sequential kernels: compiled core with a pure-numpy fallback.

The compiled module is used when it imports cleanly, unless the
environment variable ``DEPSKETCH_PURE`` is set to a non-empty value.
``BACKEND`` names the implementation in use.
"""
import os

from . import _pure

if os.environ.get("DEPSKETCH_PURE"):
    _impl = _pure
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "cython"
    except ImportError:
        _impl = _pure
        BACKEND = "python"

squash = _impl.squash
ar1_filter = _impl.ar1_filter
modulated_sequence = _impl.modulated_sequence
weighted_subset_rows = _impl.weighted_subset_rows
countsketch_apply_batch = _impl.countsketch_apply_batch

__all__ = [
    "BACKEND",
    "squash",
    "ar1_filter",
    "modulated_sequence",
    "weighted_subset_rows",
    "countsketch_apply_batch",
]
