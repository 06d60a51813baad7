"""Backend selection for the hot numeric kernels.

``EVENTCL_BACKEND`` picks the implementation at import time:

* ``numba``  - jitted kernels (error if numba is unavailable)
* ``numpy``  - pure-numpy fallback
* unset/auto - numba when importable, else numpy

Both backends are deterministic run-to-run; they agree with each other to
floating-point tolerance, not bitwise (different summation orders).
"""

from __future__ import annotations

import os

_requested = os.environ.get("EVENTCL_BACKEND", "auto").lower()

if _requested in ("numpy", "python"):
    from . import _numpy as _impl

    BACKEND = "numpy"
elif _requested == "numba":
    from . import _numba as _impl

    BACKEND = "numba"
elif _requested == "auto":
    try:
        from . import _numba as _impl

        BACKEND = "numba"
    except ImportError:
        from . import _numpy as _impl

        BACKEND = "numpy"
else:
    raise ValueError(f"EVENTCL_BACKEND must be 'numba', 'numpy', or 'auto', got {_requested!r}")

layer_norm_forward = _impl.layer_norm_forward
layer_norm_backward_input = _impl.layer_norm_backward_input
softmax_forward = _impl.softmax_forward
softmax_backward = _impl.softmax_backward
gelu_forward = _impl.gelu_forward
gelu_backward = _impl.gelu_backward
adam_update = _impl.adam_update
embedding_grad = _impl.embedding_grad

__all__ = [
    "BACKEND",
    "layer_norm_forward",
    "layer_norm_backward_input",
    "softmax_forward",
    "softmax_backward",
    "gelu_forward",
    "gelu_backward",
    "adam_update",
    "embedding_grad",
]
