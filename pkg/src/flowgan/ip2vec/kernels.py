"""Select the negative-sampling kernel at import time.

The compiled ``_sgns_fast`` module is used when it was built; setting
``FLOWGAN_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _sgns_py

BACKEND = "python"
train_chunk = _sgns_py.train_chunk

if not os.environ.get("FLOWGAN_PURE_PYTHON"):
    try:
        from . import _sgns_fast
    except ImportError:
        pass
    else:
        train_chunk = _sgns_fast.train_chunk
        BACKEND = "cython"


def get_kernel(backend=None):
    """Return the ``train_chunk`` of ``backend`` ("cython", "python" or the default)."""
    if backend is None:
        return train_chunk
    if backend == "python":
        return _sgns_py.train_chunk
    if backend == "cython":
        from . import _sgns_fast
        return _sgns_fast.train_chunk
    raise ValueError(f"unknown kernel backend {backend!r}")
