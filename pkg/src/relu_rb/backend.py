"""Kernel backend selection.

Two interchangeable implementations of the affine-layer kernel exist:

* ``compiled`` - the Cython extension ``relu_rb._kernels`` (fast path),
* ``python``   - a numpy fallback sweeping the columns of a CSC copy.

Both fold each output row left to right over the stored entries, add the
bias after the dot product, and apply ReLU last, so their results are
bit-identical.  The backend is chosen at import time; the environment
variable ``RELU_RB_KERNEL`` (``compiled`` or ``python``) forces a choice.
"""

import os

import numpy as np

try:
    from . import _kernels
except ImportError:  # pragma: no cover - depends on the build environment
    _kernels = None

_FORCED = os.environ.get("RELU_RB_KERNEL", "").strip().lower()
if _FORCED not in ("", "compiled", "python"):
    raise RuntimeError(f"RELU_RB_KERNEL must be 'compiled' or 'python', "
                       f"got {_FORCED!r}")
if _FORCED == "compiled" and _kernels is None:
    raise RuntimeError("RELU_RB_KERNEL=compiled but the relu_rb._kernels "
                       "extension is not importable")

_active = _FORCED or ("compiled" if _kernels is not None else "python")


def available_backends():
    names = ["python"]
    if _kernels is not None:
        names.insert(0, "compiled")
    return tuple(names)


def active_backend():
    return _active


def set_backend(name):
    """Switch the kernel backend (mainly for benchmarks and tests)."""
    global _active
    if name not in available_backends():
        raise ValueError(f"backend {name!r} not available; "
                         f"choose from {available_backends()}")
    _active = name


def _affine_batch_python(weights, csc, bias, x, relu):
    out = np.zeros((weights.shape[0], x.shape[1]), dtype=np.float64)
    indptr, indices, data = csc.indptr, csc.indices, csc.data
    for j in range(weights.shape[1]):
        lo, hi = indptr[j], indptr[j + 1]
        if lo == hi:
            continue
        # one multiply and one add per entry, ascending column index j:
        # the same operation sequence as the compiled row sweep
        out[indices[lo:hi]] += data[lo:hi, None] * x[j]
    out += bias[:, None]
    if relu:
        np.maximum(out, 0.0, out=out)
    return out


def affine_batch(layer, x, relu):
    """Apply one affine layer to a (n_in, batch) block of columns."""
    if _active == "compiled":
        w = layer.weights
        return _kernels.affine_batch(w.data, w.indices, w.indptr,
                                     layer.bias, x, relu)
    return _affine_batch_python(layer.weights, layer.weights_csc(),
                                layer.bias, x, relu)
