"""memcap: a memory-network caption decoder over precomputed frame features.

The package is self-contained: a small reverse-mode autodiff core
(:mod:`memcap.autodiff`) drives the multi-layer gated memory decoder,
its fusion and attention blocks, Adam training, greedy generation, and
caption metrics.  Hot numeric loops live in :mod:`memcap.kernels`, which
selects a compiled Cython core when built and falls back to numpy.
"""

__version__ = "0.1.0"

from .autodiff import Tape, Tensor, parameter  # noqa: F401
from .kernels import BACKEND as KERNEL_BACKEND  # noqa: F401
