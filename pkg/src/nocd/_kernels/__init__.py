"""Hot pair kernels with a compiled core and a pure-numpy fallback.

The Cython extension is preferred when it was built; otherwise the numpy
implementation is used transparently. ``BACKEND`` reports which one is
active. Set NOCD_FORCE_FALLBACK=1 to force the numpy path (used by the
kernel benchmark and by tests that compare the two backends).

All kernels expect float64 C-contiguous affiliation matrices and int64
index arrays.
"""

import os

from . import _fallback

if os.environ.get("NOCD_FORCE_FALLBACK"):
    _impl = _fallback
    BACKEND = "numpy"
else:
    try:
        from . import _core as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        _impl = _fallback
        BACKEND = "numpy"

pair_dots = _impl.pair_dots
edge_term_sums = _impl.edge_term_sums
accumulate_pair_grads = _impl.accumulate_pair_grads

__all__ = [
    "BACKEND",
    "pair_dots",
    "edge_term_sums",
    "accumulate_pair_grads",
]
