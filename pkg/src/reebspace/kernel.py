"""Kernel backend selection.

The compiled kernel is used when it imported successfully; set
``REEBSPACE_KERNEL=python`` or ``REEBSPACE_KERNEL=compiled`` to force a
backend.  The compiled kernel supports a bounded number of fields, so
wide multi-fields silently use the Python kernel.
"""

from __future__ import annotations

import os

from . import _kernel_py

try:  # pragma: no cover - depends on build environment
    from . import _kernel as _compiled
except ImportError:  # pragma: no cover
    _compiled = None

_FORCED = os.environ.get("REEBSPACE_KERNEL", "auto").lower()
if _FORCED not in ("auto", "python", "compiled"):
    raise RuntimeError(
        f"REEBSPACE_KERNEL must be auto, python or compiled, got {_FORCED!r}"
    )
if _FORCED == "compiled" and _compiled is None:
    raise RuntimeError("REEBSPACE_KERNEL=compiled but the compiled kernel is not built")


def backend_name(field_count: int | None = None) -> str:
    """Name of the backend that will run (``compiled`` or ``python``)."""
    if _FORCED == "python" or _compiled is None:
        return "python"
    if field_count is not None and field_count > _compiled.R_MAX_FIELDS:
        return "python"
    return "compiled"


def slice_batch(coords, values, widths, bases, dim):
    if backend_name(len(widths)) == "compiled":
        return _compiled.slice_batch(coords, values, widths, bases, dim)
    return _kernel_py.slice_batch(coords, values, widths, bases, dim)


def kernels_available() -> dict[str, bool]:
    return {"python": True, "compiled": _compiled is not None}
