"""Pure-numpy fallback kernels.

Same signatures as the compiled module in ``_kernels_c``; all functions
mutate their output arguments in place.
"""

import numpy as np

IMPL = "python"


def relu_forward(x, out):
    np.maximum(x, 0.0, out=out)


def relu_backward(x, grad_out, grad_in):
    grad_in += grad_out * (x > 0.0)


def sigmoid_forward(x, out):
    # split by sign for numerical stability at large |x|
    np.negative(np.abs(x), out=out)
    np.exp(out, out=out)
    pos = x >= 0.0
    np.divide(1.0, 1.0 + out, where=pos, out=out)
    neg = ~pos
    out[neg] = out[neg] / (1.0 + out[neg])


def adam_update(param, grad, m, v, lr, beta1, beta2, eps, step):
    m *= beta1
    m += (1.0 - beta1) * grad
    v *= beta2
    v += (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1 ** step)
    v_hat = v / (1.0 - beta2 ** step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)
