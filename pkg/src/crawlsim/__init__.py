"""Desk-scale simulator of conventional wheeled vehicles crawling over
vertically challenging rock/boulder terrain, with baseline controllers,
end-to-end behavior cloning, demonstration-driven parameter adaptation,
a dataset pipeline, and a reproducible benchmark harness."""

from ._kernels import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
__all__ = ["KERNEL_BACKEND", "__version__"]
