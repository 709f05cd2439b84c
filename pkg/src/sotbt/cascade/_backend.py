"""Selects the QP kernel implementation at import time.

The compiled extension is used when it imported successfully; set
``SOTBT_BACKEND=python`` to force the pure-numpy twin, or
``SOTBT_BACKEND=cython`` to fail hard when the extension is missing.
"""

import os

from . import _qp_py

_BACKENDS = {"python": _qp_py}

try:
    from . import _qp_cy

    _BACKENDS["cython"] = _qp_cy
except ImportError:
    _qp_cy = None

_requested = os.environ.get("SOTBT_BACKEND", "auto")
if _requested == "cython" and "cython" not in _BACKENDS:
    raise ImportError("SOTBT_BACKEND=cython but the compiled kernel is unavailable")
if _requested == "auto":
    _default = _BACKENDS.get("cython", _qp_py)
else:
    _default = _BACKENDS[_requested]


def backend_name():
    """Name of the QP kernel in use ('cython' or 'python')."""
    return _default.BACKEND_NAME


def available_backends():
    return sorted(_BACKENDS)


def get_backend(name=None):
    """Return the kernel module for `name` (default: the selected one)."""
    if name is None:
        return _default
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"unknown backend {name!r}; available: {available_backends()}")
