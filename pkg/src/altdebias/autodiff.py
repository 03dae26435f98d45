"""Dense tensors with reverse-mode automatic differentiation.

Define-by-run: every forward op records its parents and a closure that
accumulates gradients into them. The graph is rebuilt each step and torn
down by garbage collection; there is no graph reuse. A graph and its
tensors belong to a single thread.

Conventions baked into the ops:

* ``log`` clamps its argument below at ``LOG_EPS`` so boundary cases
  (zero group separation, saturated assignment) stay finite.
* ``abs`` uses subgradient 0 at exactly 0.
* ``detach`` blocks gradient flow entirely.
"""

from contextlib import contextmanager

import numpy as np

from . import kernels

LOG_EPS = 1e-12

_grad_enabled = True

# When true, every op output is checked for NaN/inf. Enabled in tests;
# too slow for training loops.
FINITE_CHECKS = False


class ShapeError(ValueError):
    pass


@contextmanager
def no_grad():
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _as_array(data, dtype):
    arr = np.asarray(data, dtype=dtype)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, dtype=None):
        self.data = _as_array(data, dtype)
        if self.data.dtype not in (np.float32, np.float64):
            self.data = self.data.astype(np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _result(data, parents, backward):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward = None
        if FINITE_CHECKS and not np.all(np.isfinite(data)):
            raise FloatingPointError("non-finite value in forward op")
        return out

    def _accum(self, g):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self):
        if self.data.ndim != 0 and self.data.size != 1:
            raise ShapeError("backward requires a scalar loss")
        topo = []
        seen = set()
        stack = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)

    def detach(self):
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        return out

    # -- elementwise arithmetic --------------------------------------------

    def __add__(self, other):
        if not isinstance(other, Tensor):
            data = self.data + other

            def backward(g, a=self):
                a._accum(g)

            return Tensor._result(data, (self,), backward)
        if self.data.shape == other.data.shape:
            data = self.data + other.data

            def backward(g, a=self, b=other):
                if a.requires_grad:
                    a._accum(g)
                if b.requires_grad:
                    b._accum(g)

            return Tensor._result(data, (self, other), backward)
        # bias broadcast over the leading batch dimension
        if self.data.ndim == 2 and other.data.shape == self.data.shape[1:]:
            data = self.data + other.data

            def backward(g, a=self, b=other):
                if a.requires_grad:
                    a._accum(g)
                if b.requires_grad:
                    b._accum(g.sum(axis=0))

            return Tensor._result(data, (self, other), backward)
        raise ShapeError(f"add: shapes {self.data.shape} and {other.data.shape}")

    __radd__ = __add__

    def __neg__(self):
        data = -self.data

        def backward(g, a=self):
            a._accum(-g)

        return Tensor._result(data, (self,), backward)

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            data = self.data * other

            def backward(g, a=self, c=other):
                a._accum(g * c)

            return Tensor._result(data, (self,), backward)
        if self.data.shape != other.data.shape:
            raise ShapeError(f"mul: shapes {self.data.shape} and {other.data.shape}")
        data = self.data * other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accum(g * b.data)
            if b.requires_grad:
                b._accum(g * a.data)

        return Tensor._result(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Tensor):
            return self * (1.0 / other)
        if self.data.shape != other.data.shape and other.data.size != 1:
            raise ShapeError(f"div: shapes {self.data.shape} and {other.data.shape}")
        data = self.data / other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accum(g / b.data)
            if b.requires_grad:
                gb = -g * a.data / (b.data * b.data)
                if b.data.size == 1 and a.data.size != 1:
                    gb = gb.sum().reshape(b.data.shape)
                b._accum(gb)

        return Tensor._result(data, (self, other), backward)

    def __rtruediv__(self, other):
        data = other / self.data

        def backward(g, a=self, c=other):
            a._accum(-g * c / (a.data * a.data))

        return Tensor._result(data, (self,), backward)

    def clamp_min(self, bound):
        """Elementwise max with a constant; gradient passes where the input
        is at or above the bound (same boundary convention as ``log``)."""
        data = np.maximum(self.data, bound)

        def backward(g, a=self, b=bound):
            a._accum(g * (a.data >= b))

        return Tensor._result(data, (self,), backward)

    def pow_const(self, exponent):
        data = self.data ** exponent

        def backward(g, a=self, e=exponent):
            a._accum(g * e * a.data ** (e - 1.0))

        return Tensor._result(data, (self,), backward)

    # -- nonlinearities ------------------------------------------------------

    def relu(self):
        data = np.empty_like(self.data)
        kernels.relu_forward(self.data, data)

        def backward(g, a=self):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            kernels.relu_backward(a.data, np.ascontiguousarray(g), a.grad)

        return Tensor._result(data, (self,), backward)

    def sigmoid(self):
        data = np.empty_like(self.data)
        kernels.sigmoid_forward(self.data, data)

        def backward(g, a=self, s=data):
            a._accum(g * s * (1.0 - s))

        return Tensor._result(data, (self,), backward)

    def softmax(self):
        if self.data.ndim != 2:
            raise ShapeError("softmax expects a 2-D batch of rows")
        shifted = self.data - self.data.max(axis=1, keepdims=True)
        e = np.exp(shifted)
        data = e / e.sum(axis=1, keepdims=True)

        def backward(g, a=self, p=data):
            inner = (g * p).sum(axis=1, keepdims=True)
            a._accum(p * (g - inner))

        return Tensor._result(data, (self,), backward)

    def log(self):
        clipped = np.maximum(self.data, LOG_EPS)
        data = np.log(clipped)

        def backward(g, a=self, c=clipped):
            a._accum(g * (a.data >= LOG_EPS) / c)

        return Tensor._result(data, (self,), backward)

    def abs(self):
        data = np.abs(self.data)

        def backward(g, a=self):
            a._accum(g * np.sign(a.data))

        return Tensor._result(data, (self,), backward)

    # -- reductions and structure --------------------------------------------

    def sum(self):
        data = np.asarray(self.data.sum())

        def backward(g, a=self):
            a._accum(np.broadcast_to(g, a.data.shape))

        return Tensor._result(data, (self,), backward)

    def mean(self):
        n = self.data.size
        data = np.asarray(self.data.mean())

        def backward(g, a=self, inv=1.0 / n):
            a._accum(np.broadcast_to(g * inv, a.data.shape))

        return Tensor._result(data, (self,), backward)

    def matmul(self, other):
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ShapeError("matmul expects 2-D operands")
        if self.data.shape[1] != other.data.shape[0]:
            raise ShapeError(
                f"matmul: inner dims {self.data.shape} @ {other.data.shape}")
        data = self.data @ other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                a._accum(g @ b.data.T)
            if b.requires_grad:
                b._accum(a.data.T @ g)

        return Tensor._result(data, (self, other), backward)

    __matmul__ = matmul

    def select(self, mask):
        """Select entries (1-D) or rows (2-D) where the boolean mask is true."""
        mask = np.asarray(mask, dtype=bool)
        if mask.shape[0] != self.data.shape[0]:
            raise ShapeError("select: mask length must match leading dim")
        data = self.data[mask]

        def backward(g, a=self, m=mask):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            a.grad[m] += g

        return Tensor._result(data, (self,), backward)

    def take_per_row(self, indices):
        """Gather one column per row: out[i] = self[i, indices[i]]."""
        if self.data.ndim != 2:
            raise ShapeError("take_per_row expects a 2-D tensor")
        idx = np.asarray(indices, dtype=np.int64)
        rows = np.arange(self.data.shape[0])
        data = self.data[rows, idx]

        def backward(g, a=self, r=rows, c=idx):
            if a.grad is None:
                a.grad = np.zeros_like(a.data)
            np.add.at(a.grad, (r, c), g)

        return Tensor._result(data, (self,), backward)


class AdamState:
    """Bias-corrected Adam over a fixed parameter list.

    ``step()`` consumes and zeroes the gradients; the step counter
    increments exactly once per call.
    """

    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.step_count += 1
        for p, m, v in zip(self.params, self._m, self._v):
            if p.grad is None:
                raise ValueError("adam step with missing gradient")
            kernels.adam_update(p.data, p.grad, m, v, self.lr, self.beta1,
                                self.beta2, self.eps, self.step_count)
        self.zero_grad()

    def zero_grad(self):
        for p in self.params:
            p.grad = None
