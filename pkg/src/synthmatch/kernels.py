"""Kernel backend selection.

The oscillator bank is the per-sample hot loop of rendering. A Cython
extension provides it when built; otherwise the vectorized NumPy fallback
is used. Set SYNTHMATCH_PURE=1 to force the fallback (used by the
benchmark to compare both).
"""

from __future__ import annotations

import os
from contextlib import contextmanager

from synthmatch import _kernels_np

_BACKENDS = {"numpy": _kernels_np}
try:
    from synthmatch import _kernels_c  # compiled extension, optional

    _BACKENDS["compiled"] = _kernels_c
except ImportError:  # pragma: no cover - depends on the build
    _kernels_c = None

if os.environ.get("SYNTHMATCH_PURE"):
    BACKEND = "numpy"
elif "compiled" in _BACKENDS:
    BACKEND = "compiled"
else:
    BACKEND = "numpy"

_active = _BACKENDS[BACKEND]

osc_mix = _active.osc_mix
rand_unit = _active.rand_unit


def backend_names() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def get_backend(name: str):
    return _BACKENDS[name]


@contextmanager
def use_backend(name: str):
    """Temporarily route kernel calls through the named backend."""
    global osc_mix, rand_unit, BACKEND
    prev = (osc_mix, rand_unit, BACKEND)
    impl = _BACKENDS[name]
    osc_mix, rand_unit, BACKEND = impl.osc_mix, impl.rand_unit, name
    try:
        yield impl
    finally:
        osc_mix, rand_unit, BACKEND = prev
