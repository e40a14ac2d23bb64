"""Numerical laboratory for discrete causal fermion systems."""
import os as _os

_threads = _os.environ.get("CFS_LAB_THREADS")
if _threads:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        _os.environ.setdefault(_var, _threads)

from .tolerances import DEFAULT, Tolerances  # noqa: E402
from .core import DiscreteSystem, InvalidSystem, causal_action, lagrangian  # noqa: E402

__all__ = ["DEFAULT", "Tolerances", "DiscreteSystem", "InvalidSystem", "causal_action", "lagrangian"]
__version__ = "0.1.0"
