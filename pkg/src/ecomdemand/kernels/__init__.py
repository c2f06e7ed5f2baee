"""Numeric kernel backend selection.

The compiled extension is preferred when built; the pure-Python fallback is
picked up transparently otherwise.  Set ECOMDEMAND_PURE=1 to force the
fallback (used by the benchmark and the parity tests).
"""

import os

from . import _pure

if os.environ.get("ECOMDEMAND_PURE", "") not in ("", "0"):
    impl = _pure
else:
    try:
        from . import _speedups as impl
    except ImportError:
        impl = _pure

BACKEND = impl.BACKEND

logsumexp = impl.logsumexp
softmax = impl.softmax
dot = impl.dot
weighted_colsum = impl.weighted_colsum
choose = impl.choose
tv_utilities = impl.tv_utilities
order_value_tables = impl.order_value_tables

__all__ = [
    "BACKEND",
    "impl",
    "logsumexp",
    "softmax",
    "dot",
    "weighted_colsum",
    "choose",
    "tv_utilities",
    "order_value_tables",
]
