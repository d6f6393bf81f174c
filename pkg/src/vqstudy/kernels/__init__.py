"""Hot numeric kernels with selectable backends.

Two implementations exist for every kernel: a numba @njit version and a
pure-numpy fallback. The VQSTUDY_KERNELS environment variable picks one at
import time:

    VQSTUDY_KERNELS=numba   force numba (ImportError if unavailable)
    VQSTUDY_KERNELS=numpy   force the numpy fallback
    VQSTUDY_KERNELS=auto    numba if importable, else numpy (default)

Each backend reduces in a fixed order (numba: sequential sum; numpy:
pairwise sum), so results are reproducible run-to-run for a given backend.
The two backends agree to well below 1e-9 on all shipped kernels; see
benchmarks/bench_kernels.py for a speed comparison.
"""

from __future__ import annotations

import os

_choice = os.environ.get("VQSTUDY_KERNELS", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"VQSTUDY_KERNELS={_choice!r} not recognized (use auto, numba, or numpy)"
    )

if _choice == "numpy":
    from . import np_impl as _impl

    BACKEND = "numpy"
else:
    try:
        from . import nb_impl as _impl

        BACKEND = "numba"
    except ImportError:
        if _choice == "numba":
            raise
        from . import np_impl as _impl

        BACKEND = "numpy"

sobel_mean_grad_mag = _impl.sobel_mean_grad_mag
count_inversions = _impl.count_inversions

__all__ = ["BACKEND", "sobel_mean_grad_mag", "count_inversions"]
