"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable; otherwise the
numpy implementation in ``_kernels_py`` is. Set ``SFPRO_KERNELS=python`` to
force the fallback.
"""
import os

from . import _kernels_py

_FUNCS = ("gru_forward", "gru_backward", "lstm_forward", "lstm_backward",
          "deep_filter_forward", "deep_filter_backward")


def _load(name):
    if name == "python":
        return _kernels_py
    if name == "compiled":
        from . import _kernels
        return _kernels
    raise ValueError(f"unknown kernel backend {name!r}")


def _default():
    forced = os.environ.get("SFPRO_KERNELS", "").strip().lower()
    if forced:
        return forced
    try:
        from . import _kernels  # noqa: F401
    except ImportError:
        return "python"
    return "compiled"


BACKEND = _default()
_impl = _load(BACKEND)


def use(name: str):
    """Switch backend at runtime ("compiled" or "python")."""
    global BACKEND, _impl
    _impl = _load(name)
    BACKEND = name


def available():
    try:
        _load("compiled")
    except ImportError:
        return ["python"]
    return ["compiled", "python"]


def get(name: str):
    return getattr(_impl, name)


def __getattr__(name):
    if name in _FUNCS:
        return getattr(_impl, name)
    raise AttributeError(name)
