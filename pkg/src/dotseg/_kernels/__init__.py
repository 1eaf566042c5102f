"""Kernel backend selection.

The hot data-movement kernels (im2col/col2im, pooling) exist twice: a
compiled Cython core and a numpy fallback. The compiled core is used when
importable; ``DOTSEG_KERNELS=numpy`` or ``=cython`` forces a choice.
Both produce bit-identical results (see tests/test_kernels.py), so the
selection only affects speed.
"""

import os

from . import pyref

_forced = os.environ.get("DOTSEG_KERNELS", "").lower()

if _forced in ("numpy", "py", "python"):
    _impl = pyref
elif _forced in ("cython", "cy", "c"):
    from . import _core as _impl  # noqa: F401  (ImportError is the answer)
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = pyref

BACKEND = getattr(_impl, "NAME", "cython")
im2col3x3 = _impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2x2 = _impl.maxpool2x2
maxpool2x2_scatter = _impl.maxpool2x2_scatter
