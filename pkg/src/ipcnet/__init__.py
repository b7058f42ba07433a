"""Point-cloud part segmentation toolkit.

PointNet-style baseline, an inter-point convolution variant, mesh
sampling, a synthetic labeled-shape generator, a training harness, and
kernel-analysis tools, all on a small reverse-mode autodiff core.
"""

__version__ = "0.1.0"

from .backend import BACKEND

__all__ = ["BACKEND", "__version__"]
