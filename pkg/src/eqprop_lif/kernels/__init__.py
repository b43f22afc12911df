"""Simulation kernels: compiled core when built, numpy fallback otherwise.

Set ``EQPROP_LIF_BACKEND=python`` to make the fallback the default.
"""

import os

from . import fallback

BACKENDS = {"python": fallback}
try:
    from . import _core
except ImportError:  # extension not built
    _core = None
else:
    BACKENDS["cython"] = _core

backend = fallback
if _core is not None and os.environ.get("EQPROP_LIF_BACKEND", "").lower() != "python":
    backend = _core


def get_backend(name=None):
    if name is None:
        return backend
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}") from None
