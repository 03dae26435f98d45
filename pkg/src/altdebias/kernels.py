"""Hot elementwise kernels, compiled when available.

At import time we pick the Cython extension if it was built, otherwise
the numpy fallback. ``ALTDEBIAS_KERNELS=python`` forces the fallback
(useful for the benchmark and for debugging).

All wrappers take C-contiguous ndarrays of float32 or float64 and mutate
their output arguments in place.
"""

import os

from . import _kernels_py

try:
    from . import _kernels_c
except ImportError:  # extension not built
    _kernels_c = None

if os.environ.get("ALTDEBIAS_KERNELS") == "python" or _kernels_c is None:
    _impl = _kernels_py
else:
    _impl = _kernels_c

IMPL = _impl.IMPL


def _flat(a):
    return a.reshape(-1)


def relu_forward(x, out):
    _impl.relu_forward(_flat(x), _flat(out))


def relu_backward(x, grad_out, grad_in):
    _impl.relu_backward(_flat(x), _flat(grad_out), _flat(grad_in))


def sigmoid_forward(x, out):
    _impl.sigmoid_forward(_flat(x), _flat(out))


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    _impl.adam_update(_flat(param), _flat(grad), _flat(m), _flat(v),
                      lr, beta1, beta2, eps, step)
