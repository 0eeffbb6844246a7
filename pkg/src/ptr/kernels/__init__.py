"""Encoder kernel backends: compiled core with a NumPy fallback.

The compiled extension is optional; when it is missing (no compiler at
install time) everything runs on the NumPy twin.  ``PTR_BACKEND`` forces a
choice globally (``numpy`` or ``compiled``); the compiled core only handles
float64, so float32 models always run on NumPy.
"""

from __future__ import annotations

import os

from . import numpy_backend

try:
    from . import _core
    HAVE_COMPILED = True
except ImportError:  # extension not built; NumPy twin covers everything
    _core = None
    HAVE_COMPILED = False

KERNEL_NAMES = (
    "ln_forward", "ln_backward", "linear_forward", "linear_backward",
    "gelu_forward", "gelu_backward", "attention_forward", "attention_backward",
)


def select(dtype: str = "float64", force: str | None = None):
    """Pick a kernel backend; returns (module, name).

    ``force`` (or the PTR_BACKEND environment variable) pins the choice;
    otherwise the compiled core wins whenever it is importable and the dtype
    is float64.
    """
    choice = force or os.environ.get("PTR_BACKEND")
    if choice not in (None, "", "auto", "numpy", "compiled"):
        raise ValueError(f"unknown kernel backend {choice!r}")
    if choice == "numpy":
        return numpy_backend, "numpy"
    if choice == "compiled":
        if not HAVE_COMPILED:
            raise RuntimeError(
                "compiled kernels requested but the extension is not built; "
                "reinstall with a C compiler or use PTR_BACKEND=numpy"
            )
        if dtype != "float64":
            raise RuntimeError("compiled kernels support float64 only")
        return _core, "compiled"
    if HAVE_COMPILED and dtype == "float64":
        return _core, "compiled"
    return numpy_backend, "numpy"


def default_backend_name(dtype: str = "float64") -> str:
    return select(dtype)[1]
