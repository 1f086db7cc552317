"""Selection between the compiled stepping kernel and the numpy fallback.

The extension module is preferred when it imports cleanly. Set
``LOWRANK_LAB_BACKEND=python`` (or ``compiled``) to force a choice;
forcing ``compiled`` raises if the extension is unavailable.
"""

import os

from . import _stepper_py

_FORCED = os.environ.get("LOWRANK_LAB_BACKEND", "auto").lower()

_compiled = None
if _FORCED in ("auto", "compiled"):
    try:
        from . import _stepper as _compiled
    except ImportError:
        if _FORCED == "compiled":
            raise ImportError(
                "LOWRANK_LAB_BACKEND=compiled but the lowrank_lab._stepper "
                "extension is not built"
            )
        _compiled = None

if _FORCED == "python" or _compiled is None:
    _active = _stepper_py
    BACKEND = "python"
else:
    _active = _compiled
    BACKEND = "compiled"


def step_chunk(U, V, sigma, eta, lam, n_steps):
    """Advance (U, V) in place by n_steps GD updates on a diagonal target."""
    _active.step_chunk(U, V, sigma, eta, lam, n_steps)


def available_backends():
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return names


def get_kernel(name):
    """Return the step_chunk callable of a specific backend by name."""
    if name == "python":
        return _stepper_py.step_chunk
    if name == "compiled":
        if _compiled is None:
            raise ValueError("compiled backend not available")
        return _compiled.step_chunk
    raise ValueError(f"unknown backend {name!r}")
