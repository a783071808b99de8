"""Backend dispatch for the batched hot kernels.

Two interchangeable implementations exist: a pure-numpy one built on
gufunc-batched ``eigh``/``svd`` and a numba-compiled one. The active
backend is chosen once at import time from the ``GWR_BACKEND`` environment
variable:

* ``auto`` (default): currently numpy. On the loads this package runs
  (thousands of d <= 6 eigendecompositions, LAPACK-bound either way) the
  gufunc path benchmarks at or ahead of the compiled loop, see
  ``benchmarks/bench_kernels.py``.
* ``numba``: require numba, raise if it is missing.
* ``numpy``: never touch numba.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _numpy

_VALID = ("auto", "numba", "numpy")


def _load_numba_impl() -> ModuleType:
    from . import _numba

    return _numba


def _select() -> tuple[ModuleType, str]:
    requested = os.environ.get("GWR_BACKEND", "auto").lower()
    if requested not in _VALID:
        raise ValueError(
            f"GWR_BACKEND must be one of {_VALID}, got {requested!r}"
        )
    if requested == "numba":
        try:
            return _load_numba_impl(), "numba"
        except ImportError:
            raise ImportError(
                "GWR_BACKEND=numba but numba is not installed; "
                "install gwreg[accel] or set GWR_BACKEND=numpy"
            ) from None
    return _numpy, "numpy"


_impl, _backend_name = _select()

sqrt_psd_batch = _impl.sqrt_psd_batch
transport_batch = _impl.transport_batch
wasserstein_batch = _impl.wasserstein_batch


def backend() -> str:
    """Name of the active kernel backend ('numpy' or 'numba')."""
    return _backend_name


def get_impl(name: str) -> ModuleType:
    """Fetch a specific backend module by name (for tests and benchmarks)."""
    if name == "numpy":
        return _numpy
    if name == "numba":
        return _load_numba_impl()
    raise ValueError(f"unknown backend {name!r}")
