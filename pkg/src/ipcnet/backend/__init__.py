"""Kernel backend selection.

The hot kernels (valid convolution and max pooling, forward and backward)
exist twice: a Cython extension (``ipcnet.backend._native``) and a pure
numpy fallback (``ipcnet.backend.reference``).  The extension is used when
it imported successfully; set ``IPCNET_BACKEND=python`` or
``IPCNET_BACKEND=native`` to force a choice.  ``benchmarks/bench_kernels.py``
compares the two.
"""

import os

from . import reference

try:
    from . import _native
except ImportError:
    _native = None

_requested = os.environ.get("IPCNET_BACKEND", "").strip().lower()
if _requested == "python":
    _impl = reference
elif _requested == "native":
    if _native is None:
        raise ImportError(
            "IPCNET_BACKEND=native but the compiled extension is not available; "
            "build it with 'pip install -e .' or unset IPCNET_BACKEND"
        )
    _impl = _native
elif _requested:
    raise ImportError(f"unknown IPCNET_BACKEND value {_requested!r} (use 'native' or 'python')")
else:
    _impl = _native if _native is not None else reference

BACKEND = "native" if _impl is _native else "python"

conv2d_forward = _impl.conv2d_forward
conv2d_backward = _impl.conv2d_backward
maxpool_forward = _impl.maxpool_forward
maxpool_backward = _impl.maxpool_backward
