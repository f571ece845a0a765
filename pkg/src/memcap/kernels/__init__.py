"""Hot numeric kernels with a compiled core and a numpy fallback.

The compiled extension (``_ckern``, built from Cython) is preferred when it
imports; otherwise the numpy implementation in :mod:`pykernels` is used.
Set ``MEMCAP_KERNELS=py`` or ``MEMCAP_KERNELS=c`` to force a backend;
forcing the compiled backend raises ImportError when it is not built.

Both backends implement the same functions over C-contiguous float64
arrays: matmul / matmul_tn / matmul_nt, matvec / matvec_t, circ_conv,
circ_corr, softmax_vec, acc_outer, adam_update.
"""

import os

from . import pykernels

_requested = os.environ.get("MEMCAP_KERNELS", "auto").lower()

if _requested in ("py", "python", "numpy"):
    _impl = pykernels
elif _requested in ("c", "cy", "compiled"):
    from . import _ckern as _impl
elif _requested == "auto":
    try:
        from . import _ckern as _impl
    except ImportError:
        _impl = pykernels
else:
    raise ValueError(f"unknown MEMCAP_KERNELS value: {_requested!r}")

BACKEND = _impl.NAME

matmul = _impl.matmul
matmul_tn = _impl.matmul_tn
matmul_nt = _impl.matmul_nt
matvec = _impl.matvec
matvec_t = _impl.matvec_t
circ_conv = _impl.circ_conv
circ_corr = _impl.circ_corr
softmax_vec = _impl.softmax_vec
acc_outer = _impl.acc_outer
adam_update = _impl.adam_update
