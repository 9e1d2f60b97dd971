"""Convolution kernels with a compiled core and a pure-NumPy fallback.

The two implementations follow one accumulation-order contract and produce
bitwise-identical results; which one loads is an import-time decision. Set
``WSDN_PURE_PYTHON=1`` to force the fallback (useful for benchmarking and for
environments without a compiler).
"""

import os

if os.environ.get("WSDN_PURE_PYTHON") == "1":
    from ._fallback import (
        BACKEND_NAME,
        conv3x3_backward_input,
        conv3x3_backward_weights,
        conv3x3_forward,
    )
else:
    try:
        from ._core import (
            BACKEND_NAME,
            conv3x3_backward_input,
            conv3x3_backward_weights,
            conv3x3_forward,
        )
    except ImportError:
        from ._fallback import (
            BACKEND_NAME,
            conv3x3_backward_input,
            conv3x3_backward_weights,
            conv3x3_forward,
        )

BACKEND = BACKEND_NAME

__all__ = [
    "BACKEND",
    "BACKEND_NAME",
    "conv3x3_backward_input",
    "conv3x3_backward_weights",
    "conv3x3_forward",
]
