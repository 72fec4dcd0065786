"""Chart-kernel backend selection.

The compiled Cython kernels are preferred when the extension built;
otherwise the numpy fallback is used.  Override with the environment
variable TDPCFG_KERNELS=python|compiled or per call via `backend=`.
"""

import os

from . import _chart_py

_BACKENDS = {"python": _chart_py}

try:
    from . import _chart_cy

    _BACKENDS["compiled"] = _chart_cy
except ImportError:  # extension not built; numpy fallback stays active
    _chart_cy = None


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _default_name() -> str:
    env = os.environ.get("TDPCFG_KERNELS")
    if env:
        if env not in _BACKENDS:
            raise ValueError(
                f"TDPCFG_KERNELS={env!r} not available; choices: {available_backends()}"
            )
        return env
    return "compiled" if "compiled" in _BACKENDS else "python"


DEFAULT_BACKEND = _default_name()


def get_backend(name: str | None = None):
    """Return the kernel module for `name` (default: best available)."""
    if name is None:
        name = DEFAULT_BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(
            f"unknown kernel backend {name!r}; choices: {available_backends()}"
        ) from None
