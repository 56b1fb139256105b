"""Kernel backend selection.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback is used. Callers go through ``_backend.kernels`` at call time so
switching takes effect everywhere.
"""

from contextlib import contextmanager

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = {"python": _fallback}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

kernels = _compiled if _compiled is not None else _fallback


def available():
    """Names of the importable backends, compiled first when present."""
    return sorted(BACKENDS, key=lambda n: n != "compiled")


def current():
    return "compiled" if kernels is _compiled and _compiled is not None else "python"


def set_backend(name):
    global kernels
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {available()})")
    kernels = BACKENDS[name]


@contextmanager
def using(name):
    previous = current()
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)
