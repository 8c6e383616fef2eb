"""Reverse-mode automatic differentiation over numpy arrays.

Covers exactly the operation set the networks here are built from:
affine maps (matmul, add), sin and relu activations, elementwise and
scalar arithmetic, concatenation, slicing and summation.  Gradients are
exact; relu takes subgradient 0 at the kink so runs are deterministic.
"""

from contextlib import contextmanager

import numpy as np

_GRAD_ENABLED = [True]


@contextmanager
def no_grad():
    """Disable graph recording inside the block (pure evaluation)."""
    _GRAD_ENABLED.append(False)
    try:
        yield
    finally:
        _GRAD_ENABLED.pop()


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = ()
        self._backward_fn = None

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray):
        self.grad = g if self.grad is None else self.grad + g

    # -- graph construction --------------------------------------------

    @staticmethod
    def _make(data, parents, backward_fn):
        out = Tensor(data)
        if _GRAD_ENABLED[-1] and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward_fn = backward_fn
        return out

    @staticmethod
    def _coerce(value) -> "Tensor":
        return value if isinstance(value, Tensor) else Tensor(value)

    # -- arithmetic -----------------------------------------------------

    def __add__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))
        return self._make(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(-g)
        return self._make(-self.data, (self,), backward)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))
        return self._make(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(
                    _unbroadcast(-g * self.data / other.data ** 2, other.data.shape))
        return self._make(self.data / other.data, (self, other), backward)

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * exponent * self.data ** (exponent - 1))
        return self._make(self.data ** exponent, (self,), backward)

    def __matmul__(self, other):
        other = self._coerce(other)
        def backward(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g @ np.swapaxes(other.data, -1, -2),
                                              self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(np.swapaxes(self.data, -1, -2) @ g,
                                               other.data.shape))
        return self._make(self.data @ other.data, (self, other), backward)

    @property
    def T(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g.T)
        return self._make(self.data.T, (self,), backward)

    def __getitem__(self, key):
        def backward(g):
            if self.requires_grad:
                buf = np.zeros_like(self.data)
                buf[key] = g
                self._accumulate(buf)
        return self._make(self.data[key], (self,), backward)

    def reshape(self, shape):
        orig = self.data.shape
        def backward(g):
            if self.requires_grad:
                self._accumulate(g.reshape(orig))
        return self._make(self.data.reshape(shape), (self,), backward)

    def transpose(self, axes):
        inverse = tuple(np.argsort(axes))
        def backward(g):
            if self.requires_grad:
                self._accumulate(g.transpose(inverse))
        return self._make(self.data.transpose(axes), (self,), backward)

    # -- nonlinearities and reductions -----------------------------------

    def sin(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * np.cos(self.data))
        return self._make(np.sin(self.data), (self,), backward)

    def relu(self):
        mask = self.data > 0
        def backward(g):
            if self.requires_grad:
                self._accumulate(g * mask)
        return self._make(np.where(mask, self.data, 0.0), (self,), backward)

    def sum(self):
        def backward(g):
            if self.requires_grad:
                self._accumulate(np.full(self.data.shape, float(g)))
        return self._make(self.data.sum(), (self,), backward)

    def mean(self):
        return self.sum() * (1.0 / self.data.size)

    # -- backward pass ----------------------------------------------------

    def backward(self, seed=None):
        """Propagate gradients from this node to every requires_grad leaf."""
        if seed is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed requires a scalar output")
            seed = np.ones_like(self.data)
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.asarray(seed, dtype=np.float64))
        for node in reversed(order):
            if node._backward_fn is not None and node.grad is not None:
                node._backward_fn(node.grad)


def concat(tensors, axis: int = -1) -> Tensor:
    """Concatenate along `axis`; gradients are split back by block."""
    tensors = [Tensor._coerce(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)
    def backward(g):
        pieces = np.split(g, offsets[1:-1], axis=axis)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)
    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis),
                        tuple(tensors), backward)


def stack(tensors, axis: int = 0) -> Tensor:
    """Stack along a fresh axis; gradients index back out."""
    tensors = [Tensor._coerce(t) for t in tensors]
    def backward(g):
        pieces = np.moveaxis(g, axis, 0)
        for t, piece in zip(tensors, pieces):
            if t.requires_grad:
                t._accumulate(piece)
    return Tensor._make(np.stack([t.data for t in tensors], axis=axis),
                        tuple(tensors), backward)


def parameter(data) -> Tensor:
    """A leaf tensor tracked by the optimizer."""
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


def zero_grads(params) -> None:
    for p in params:
        p.grad = None


def gradient(params, loss: Tensor):
    """Reverse-mode gradients of a scalar loss for each parameter.

    Raises FloatingPointError when the loss or any gradient is non-finite,
    which signals a diverging optimization rather than a recoverable state.
    """
    if not np.isfinite(loss.data):
        raise FloatingPointError("loss is non-finite")
    zero_grads(params)
    loss.backward()
    grads = []
    for p in params:
        g = p.grad if p.grad is not None else np.zeros_like(p.data)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError("non-finite gradient encountered")
        grads.append(g)
    return grads
