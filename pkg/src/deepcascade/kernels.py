"""Kernel backend selection.

The compiled extension is used when it imports; set
``DEEPCASCADE_KERNELS=python`` to force the numpy fallback. Callers look the
functions up on this module at call time, so :func:`set_backend` takes
effect immediately.
"""
import os

from . import _pykernels

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS = ("cython", "python")
backend = None
bin_columns = build_histogram = scan_histogram = partition = predict_tree = None


def available():
    return [b for b in BACKENDS if b == "python" or _compiled is not None]


def set_backend(name):
    global backend, bin_columns, build_histogram, scan_histogram, partition, predict_tree
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        impl = _compiled
    elif name == "python":
        impl = _pykernels
    else:
        raise ValueError(f"unknown kernel backend {name!r}")
    backend = name
    bin_columns = impl.bin_columns
    build_histogram = impl.build_histogram
    scan_histogram = impl.scan_histogram
    partition = impl.partition
    predict_tree = impl.predict_tree


set_backend(os.environ.get("DEEPCASCADE_KERNELS")
            or ("cython" if _compiled is not None else "python"))
