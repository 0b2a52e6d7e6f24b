"""Backend selection for the hot kernels.

The compiled extension (`tansurf._kernels._core`) is used when importable;
otherwise the numpy fallback (`tansurf._kernels.pure`).  Set the environment
variable ``TANSURF_BACKEND`` to ``c`` or ``python`` to force one; ``c`` raises
if the extension is missing.
"""

from __future__ import annotations

import os

from . import pure
from .program import Program, compile_expressions, coordinate_slots

__all__ = [
    "BACKEND",
    "Program",
    "compile_expressions",
    "coordinate_slots",
    "eval_program",
    "eval_program_batch",
    "geodesic_path",
    "geodesic_path_batch",
    "get_backend",
]

_requested = os.environ.get("TANSURF_BACKEND", "auto").lower()

if _requested in ("c", "auto"):
    try:
        from . import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "c":
            raise ImportError(
                "TANSURF_BACKEND=c requested but the compiled kernel is not "
                "available; reinstall with Cython and a C compiler present"
            )
        _impl = pure
elif _requested == "python":
    _impl = pure
else:
    raise ValueError(
        f"TANSURF_BACKEND={_requested!r} not recognized (use 'auto', 'c' or 'python')"
    )

BACKEND: str = _impl.BACKEND_NAME

eval_program = _impl.eval_program
eval_program_batch = _impl.eval_program_batch
geodesic_path = _impl.geodesic_path
geodesic_path_batch = _impl.geodesic_path_batch


def get_backend(name: str | None = None):
    """Return the kernel module for `name` ('c' or 'python'; None = active)."""
    if name is None or name == BACKEND:
        return _impl
    if name == "python":
        return pure
    if name == "c":
        from . import _core  # raises ImportError when missing

        return _core
    raise ValueError(f"unknown backend {name!r}")
