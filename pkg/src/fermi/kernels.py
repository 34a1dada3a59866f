"""Backend selection for the SGDA inner loop.

The compiled Cython kernel is preferred when its extension module built;
otherwise the numpy implementation is used. Force a choice with the
environment variable ``FERMI_KERNEL=python|compiled`` (checked at import) or
:func:`select` at runtime. Each backend is deterministic for a fixed seed;
they agree with each other to rounding, not bitwise.
"""

import os

from . import _sgda_py

__all__ = ["available", "active", "select", "run_segment"]

_IMPLS = {"python": _sgda_py.run_segment}
try:
    from . import _sgda_cy

    _IMPLS["compiled"] = _sgda_cy.run_segment
except ImportError:
    pass

_active = "compiled" if "compiled" in _IMPLS else "python"

_env = os.environ.get("FERMI_KERNEL")
if _env:
    if _env not in _IMPLS:
        raise ImportError(
            f"FERMI_KERNEL={_env!r} is not available; "
            f"built backends: {sorted(_IMPLS)}"
        )
    _active = _env


def available():
    """Names of the backends that imported successfully."""
    return sorted(_IMPLS)


def active():
    """The backend currently in use."""
    return _active


def select(name):
    """Switch backends; returns the previously active name."""
    global _active
    if name not in _IMPLS:
        raise ValueError(f"unknown backend {name!r}; built backends: {sorted(_IMPLS)}")
    previous = _active
    _active = name
    return previous


def run_segment(*args):
    return _IMPLS[_active](*args)
