"""Backend selection for the LSTM sequence kernels.

The compiled extension is used when it imported cleanly; otherwise the numpy
fallback is used. :func:`use_backend` switches explicitly (tests, benchmarks).
"""
from __future__ import annotations

from . import _kernels_py

try:
    from . import _lstm_ext
except ImportError:  # extension not built
    _lstm_ext = None

BACKENDS = {"python": _kernels_py}
if _lstm_ext is not None:
    BACKENDS["compiled"] = _lstm_ext

_active = "compiled" if _lstm_ext is not None else "python"


def available() -> list[str]:
    return sorted(BACKENDS)


def backend() -> str:
    return _active


class _Scope:
    def __init__(self, previous: str):
        self.previous = previous

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        global _active
        _active = self.previous


def use_backend(name: str) -> _Scope:
    """Switch backends; as a context manager the previous one is restored on exit."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} not available; have {available()}")
    scope = _Scope(_active)
    _active = name
    return scope


def current():
    """The active kernel module; hold on to it across forward and backward."""
    return BACKENDS[_active]


def lstm_forward(x, mask, W, U, b):
    return BACKENDS[_active].lstm_forward(x, mask, W, U, b)


def lstm_backward(dh_final, cache, need_dx=False):
    return BACKENDS[_active].lstm_backward(dh_final, cache, need_dx)
