# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled elementwise kernels (fused loops over flat float buffers)."""

from libc.math cimport exp, fabs, sqrt

IMPL = "cython"

ctypedef fused real:
    float
    double


def relu_forward(real[::1] x, real[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        out[i] = x[i] if x[i] > 0.0 else 0.0


def relu_backward(real[::1] x, real[::1] grad_out, real[::1] grad_in):
    cdef Py_ssize_t i, n = x.shape[0]
    for i in range(n):
        if x[i] > 0.0:
            grad_in[i] += grad_out[i]


def sigmoid_forward(real[::1] x, real[::1] out):
    cdef Py_ssize_t i, n = x.shape[0]
    cdef double e
    for i in range(n):
        e = exp(-fabs(<double> x[i]))
        if x[i] >= 0.0:
            out[i] = <real> (1.0 / (1.0 + e))
        else:
            out[i] = <real> (e / (1.0 + e))


def adam_update(real[::1] param, real[::1] grad, real[::1] m, real[::1] v,
                double lr, double beta1, double beta2, double eps, long step):
    cdef Py_ssize_t i, n = param.shape[0]
    cdef double c1 = 1.0 - beta1 ** step
    cdef double c2 = 1.0 - beta2 ** step
    cdef double g, mh, vh
    for i in range(n):
        g = <double> grad[i]
        m[i] = <real> (beta1 * m[i] + (1.0 - beta1) * g)
        v[i] = <real> (beta2 * v[i] + (1.0 - beta2) * g * g)
        mh = m[i] / c1
        vh = v[i] / c2
        param[i] = <real> (param[i] - lr * mh / (sqrt(vh) + eps))
