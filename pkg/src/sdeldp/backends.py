"""Backend selection for the batch simulation kernels.

``SDELDP_BACKEND`` picks the implementation of the hot Monte Carlo loops:

* ``auto`` (default): numba kernels when the field is a built-in carrying a
  kernel pair and numba imports cleanly; numpy otherwise.
* ``numpy``: always the vectorized numpy path.
* ``numba``: force the jitted path; raises if the field has no kernels.

Single-path operations (skeleton integration, one-replica simulation, the
rate solver) always run in numpy: their cost is negligible and arbitrary
Python-callable fields cannot be jitted.  ``benchmarks/bench_backends.py``
compares the two paths.
"""

import os

from .errors import ValidationError

BACKEND_ENV = "SDELDP_BACKEND"
WORKERS_ENV = "SDELDP_WORKERS"

_VALID = ("auto", "numba", "numpy")
_numba_state = {}


def requested_backend():
    raw = os.environ.get(BACKEND_ENV, "auto").strip().lower()
    if raw not in _VALID:
        raise ValidationError(
            f"{BACKEND_ENV} must be one of {_VALID}, got {raw!r}")
    return raw


def numba_available():
    if "ok" not in _numba_state:
        try:
            import numba  # noqa: F401
            _numba_state["ok"] = True
        except ImportError:
            _numba_state["ok"] = False
    return _numba_state["ok"]


def resolve_backend(field, requested=None):
    """The backend a batch simulation of ``field`` will actually use."""
    req = requested_backend() if requested is None else requested
    if req not in _VALID:
        raise ValidationError(f"backend must be one of {_VALID}, got {req!r}")
    jittable = field.jit_spec is not None and numba_available()
    if req == "numpy":
        return "numpy"
    if req == "numba":
        if not jittable:
            raise ValidationError(
                f"backend 'numba' forced but field {field.label!r} has no jit kernels "
                f"(or numba is unavailable)")
        return "numba"
    return "numba" if jittable else "numpy"


def jit_kernels(field):
    from . import _kernels_numba

    name, params = field.jit_spec
    return _kernels_numba.model_kernels(name, params)


def worker_count():
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if raw:
        try:
            w = int(raw)
        except ValueError:
            raise ValidationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
        if w < 1:
            raise ValidationError(f"{WORKERS_ENV} must be >= 1, got {w}")
        return w
    return os.cpu_count() or 1
