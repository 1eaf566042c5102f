"""Weakly supervised cell instance segmentation from dot annotations.

Coarse-label generation, a two-head mini U-Net engine with relevance
propagation, a re-weighted training loss, instance splitting/expansion
post-processing, and object-level metrics.
"""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
