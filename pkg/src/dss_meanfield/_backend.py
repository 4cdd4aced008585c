"""Pick the compiled kernels when available, else the pure-Python twin.

Set ``DSS_MEANFIELD_BACKEND=python`` to force the fallback.
"""
import os

if os.environ.get("DSS_MEANFIELD_BACKEND", "").lower() == "python":
    from . import _pykernels as kernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:  # extension not built
        from . import _pykernels as kernels

BACKEND = kernels.BACKEND
