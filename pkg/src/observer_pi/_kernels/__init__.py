"""Backend selection for the simulation stepping loops.

The compiled core is used when it was built; set OBSERVER_PI_PURE_PYTHON=1
to force the NumPy fallback (useful for debugging and benchmarking).
"""

import os

from . import _simcore_py

if os.environ.get("OBSERVER_PI_PURE_PYTHON", "") not in ("", "0"):
    _impl = _simcore_py
else:
    try:
        from . import _simcore as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _simcore_py

linear_loop = _impl.linear_loop
pendulum_loop = _impl.pendulum_loop
BACKEND = _impl.BACKEND
DIVERGENCE_BOUND = _simcore_py.DIVERGENCE_BOUND


def backend_name() -> str:
    """Which stepping implementation is active ("compiled" or "python")."""
    return BACKEND
