"""triseg: three-channel multi-resolution CNN for binary image
segmentation, implemented from scratch on numpy with optional numba
kernels."""

__version__ = "0.1.0"
