"""Kernel backend selection.

The compiled extension ``_ckernels`` is used when it imports; otherwise the
numpy fallback is used. Set ``LODGFEM_PURE_PYTHON=1`` to force the fallback.
"""

import os

from . import _pykernels as python_backend

try:
    if os.environ.get("LODGFEM_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure python backend requested")
    from . import _ckernels as compiled_backend
except ImportError:
    compiled_backend = None

backend = compiled_backend if compiled_backend is not None else python_backend
BACKEND_NAME = "cython" if compiled_backend is not None else "python"

pcg_csr = backend.pcg_csr
p1_local_matrices = backend.p1_local_matrices

__all__ = ["BACKEND_NAME", "backend", "compiled_backend", "python_backend",
           "pcg_csr", "p1_local_matrices"]
