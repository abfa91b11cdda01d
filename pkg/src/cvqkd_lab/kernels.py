"""Backend selection for the scalar key-rate kernels.

The compiled extension is used when it was built; otherwise, or when
``CVQKD_LAB_PURE_PYTHON`` is set to a non-empty value, the pure-Python twin
is imported instead. ``BACKEND`` names the one in use.
"""
from __future__ import annotations

import os

if os.environ.get("CVQKD_LAB_PURE_PYTHON"):
    from . import _pykernels as _impl

    BACKEND = "python"
else:
    try:
        from . import _ckernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        from . import _pykernels as _impl

        BACKEND = "python"

g_entropy = _impl.g_entropy
rate_homodyne = _impl.rate_homodyne
rate_heterodyne = _impl.rate_heterodyne
rate_noisy = _impl.rate_noisy
best_added_noise = _impl.best_added_noise


def load_backend(name: str):
    """Import a specific backend module by name (``"cython"`` or ``"python"``)."""
    if name == "python":
        from . import _pykernels

        return _pykernels
    if name == "cython":
        from . import _ckernels  # type: ignore[attr-defined]

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")
