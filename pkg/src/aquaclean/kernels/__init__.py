"""Hot image kernels with a compiled backend and a numpy fallback.

The compiled extension is used when it imports; setting
``AQUACLEAN_PURE_PYTHON=1`` forces the fallback. Both backends produce
bit-identical output.
"""
import os

from . import _fallback

BACKEND = "python"

if os.environ.get("AQUACLEAN_PURE_PYTHON", "") not in ("", "0"):
    from ._fallback import demosaic_bilinear, median3x3, nearest_sq
else:
    try:
        from ._ckernels import demosaic_bilinear, median3x3, nearest_sq
        BACKEND = "cython"
    except ImportError:  # extension not built
        from ._fallback import demosaic_bilinear, median3x3, nearest_sq


def compiled():
    """Return the compiled module, or None when it is not built."""
    try:
        from . import _ckernels
    except ImportError:
        return None
    return _ckernels


__all__ = ["BACKEND", "compiled", "demosaic_bilinear", "median3x3", "nearest_sq"]
