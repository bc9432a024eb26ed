"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when the
environment variable ``CANN_PURE_PYTHON`` is set to a non-empty value other
than ``0``, the numpy implementation is used.
"""
import os

from . import _kernels_py

_force_py = os.environ.get("CANN_PURE_PYTHON", "") not in ("", "0")

try:
    if _force_py:
        raise ImportError("pure-python backend forced")
    from . import _kernels as _impl
    BACKEND = "compiled"
except ImportError:
    _impl = _kernels_py
    BACKEND = "python"

forward_batch = _impl.forward_batch
backward_batch = _impl.backward_batch
loss_batch = _impl.loss_batch
loss_grad = _impl.loss_grad
adam_update = _impl.adam_update


def backends() -> dict:
    """All importable backends by name (used by tests and the benchmark)."""
    out = {"python": _kernels_py}
    try:
        from . import _kernels
        out["compiled"] = _kernels
    except ImportError:
        pass
    return out
