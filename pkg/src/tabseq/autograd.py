"""Dense float64 tensors with a reverse-mode tape.

Every differentiable operation records its parents and a vector-Jacobian
product closure on the output tensor.  ``Tensor.backward`` walks the recorded
graph in reverse topological order and accumulates gradients into leaves that
were created with ``requires_grad=True``.

Recording is skipped entirely inside ``no_grad()``; tensors produced there
carry no tape references and are safe to share between threads.
"""

import threading

import numpy as np

from .errors import ContractError, DimensionError, LabelError

DTYPE = np.float64

_state = threading.local()


def is_grad_enabled():
    return getattr(_state, "enabled", True)


class no_grad:
    """Context manager that disables tape recording on the current thread."""

    def __enter__(self):
        self._prev = is_grad_enabled()
        _state.enabled = False
        return self

    def __exit__(self, *exc):
        _state.enabled = self._prev
        return False


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _broadcast_shape(a, b):
    try:
        return np.broadcast_shapes(a, b)
    except ValueError:
        raise DimensionError(f"cannot broadcast shapes {a} and {b}") from None


def _is_basic_index(idx):
    if not isinstance(idx, tuple):
        idx = (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in idx)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "name")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.array(data, dtype=DTYPE)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._vjp = None
        self.name = name

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data, parents, vjp):
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out.name = None
        if is_grad_enabled() and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._vjp = vjp
        else:
            out.requires_grad = False
            out._parents = ()
            out._vjp = None
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_leaf(self):
        return self._vjp is None

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor._result(self.data, (), None)

    def __repr__(self):
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{grad})"

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def vjp(g):
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor._result(self.data + other.data, (self, other), vjp)

    __radd__ = __add__

    def __sub__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self.shape, other.shape)
        a_shape, b_shape = self.shape, other.shape

        def vjp(g):
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return Tensor._result(self.data - other.data, (self, other), vjp)

    def __rsub__(self, other):
        return as_tensor(other) - self

    def __mul__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self.shape, other.shape)
        a, b = self.data, other.data

        def vjp(g):
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor._result(a * b, (self, other), vjp)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        _broadcast_shape(self.shape, other.shape)
        a, b = self.data, other.data

        def vjp(g):
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor._result(a / b, (self, other), vjp)

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        if isinstance(idx, Tensor):
            idx = idx.data.astype(np.intp)
        src_shape = self.shape
        basic = _is_basic_index(idx)
        return Tensor._result(self.data[idx], (self,), lambda g: (_IndexedGrad(src_shape, idx, g, basic),))

    # -- elementwise nonlinearities -------------------------------------------

    def tanh(self):
        y = np.tanh(self.data)
        return Tensor._result(y, (self,), lambda g: (g * (1.0 - y * y),))

    def sigmoid(self):
        y = _sigmoid(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y * (1.0 - y),))

    def relu(self):
        mask = self.data > 0
        return Tensor._result(self.data * mask, (self,), lambda g: (g * mask,))

    def exp(self):
        y = np.exp(self.data)
        return Tensor._result(y, (self,), lambda g: (g * y,))

    def log(self):
        x = self.data
        return Tensor._result(np.log(x), (self,), lambda g: (g / x,))

    # -- reductions and reshaping ---------------------------------------------

    def sum(self, axis=None, keepdims=False):
        shape = self.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._result(np.asarray(self.data.sum(axis=axis, keepdims=keepdims)), (self,), vjp)

    def mean(self, axis=None, keepdims=False):
        n = self.data.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.shape
        return Tensor._result(self.data.reshape(shape), (self,), lambda g: (g.reshape(src_shape),))

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inverse = np.argsort(axes)
        return Tensor._result(self.data.transpose(axes), (self,), lambda g: (g.transpose(inverse),))

    def flip(self, axis):
        return Tensor._result(np.flip(self.data, axis), (self,), lambda g: (np.flip(g, axis),))

    def softmax(self, axis=-1):
        return softmax(self, axis)

    # -- tape ------------------------------------------------------------------

    def backward(self):
        """Accumulate d(self)/d(leaf) into ``leaf.grad`` for every trainable leaf."""
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {self.shape}")
        if not self.requires_grad:
            raise ContractError("backward() called on a tensor that is not on the tape")

        topo = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))

        # id -> [array, owned]; owned buffers may be accumulated into in place
        grads = {id(self): [np.ones_like(self.data), True]}
        for node in reversed(topo):
            entry = grads.pop(id(node), None)
            if entry is None:
                continue
            g = entry[0]
            if node._vjp is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            for p, pg in zip(node._parents, node._vjp(g)):
                if pg is None or not p.requires_grad:
                    continue
                key = id(p)
                slot = grads.get(key)
                if isinstance(pg, _IndexedGrad):
                    if slot is None:
                        grads[key] = [pg.dense(), True]
                    else:
                        if not slot[1]:
                            slot[0], slot[1] = slot[0].copy(), True
                        pg.add_into(slot[0])
                elif slot is None:
                    grads[key] = [pg, False]
                elif slot[1]:
                    slot[0] += pg
                else:
                    slot[0], slot[1] = slot[0] + pg, True


class _IndexedGrad:
    """Gradient that is zero except at ``idx``; avoids a dense buffer per slice."""

    __slots__ = ("shape", "idx", "g", "basic")

    def __init__(self, shape, idx, g, basic):
        self.shape, self.idx, self.g, self.basic = shape, idx, g, basic

    def add_into(self, buf):
        if self.basic:
            buf[self.idx] += self.g
        else:
            np.add.at(buf, self.idx, self.g)

    def dense(self):
        buf = np.zeros(self.shape, dtype=DTYPE)
        self.add_into(buf)
        return buf


def as_tensor(x):
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


# -- free functions ------------------------------------------------------------


def tanh(x):
    return as_tensor(x).tanh()


def sigmoid(x):
    return as_tensor(x).sigmoid()


def relu(x):
    return as_tensor(x).relu()


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 1 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    A, B = a.data, b.data
    if B.ndim == 2:
        def vjp(g):
            ga = g @ B.T
            gb = A.reshape(-1, A.shape[-1]).T @ g.reshape(-1, g.shape[-1])
            return ga, gb
    else:
        def vjp(g):
            ga = _unbroadcast(g @ np.swapaxes(B, -1, -2), A.shape)
            gb = _unbroadcast(np.swapaxes(A, -1, -2) @ g, B.shape)
            return ga, gb

    return Tensor._result(A @ B, (a, b), vjp)


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return Tensor._result(y, (x,), vjp)


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    y = z - lse

    def vjp(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return Tensor._result(y, (x,), vjp)


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(f"cannot concatenate shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return Tensor._result(data, tuple(tensors), vjp)


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    try:
        data = np.stack([t.data for t in tensors], axis=axis)
    except ValueError:
        raise DimensionError(f"cannot stack shapes {[t.shape for t in tensors]}") from None

    def vjp(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._result(data, tuple(tensors), vjp)


def layer_norm(x, gain=None, bias=None, eps=1e-5):
    """Normalize the last axis to zero mean and unit variance, then scale and shift."""
    x = as_tensor(x)
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std

    def vjp(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv_std * (g - gm - xhat * gx),)

    out = Tensor._result(xhat, (x,), vjp)
    if gain is not None:
        out = out * gain
    if bias is not None:
        out = out + bias
    return out


def dropout(x, keep, training, rng=None):
    """Inverted dropout: scales kept units by 1/keep so inference is the identity."""
    if not training or keep >= 1.0:
        return x
    if keep <= 0.0:
        raise ValueError("keep probability must be positive")
    rng = rng if rng is not None else np.random.default_rng()
    mask = (rng.random(x.shape) < keep) / keep
    return x * Tensor(mask)


def cross_entropy(logits, targets, weights=None):
    """Sum of -log softmax(logits)[target] over all positions.

    ``logits`` has classes on the last axis; ``targets`` holds integer class
    indices with the leading shape of ``logits``.  ``weights`` (same shape as
    targets) scales each position's term, which is how padding is masked out.
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.intp)
    k = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ContractError(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= k):
        raise LabelError(f"target index out of range for {k} classes")
    w = np.ones(targets.shape, dtype=DTYPE) if weights is None else np.asarray(weights, dtype=DTYPE)

    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    value = -(w * picked).sum()

    def vjp(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, targets[..., None], 1.0, axis=-1)
        return (g * w[..., None] * (p - onehot),)

    return Tensor._result(np.asarray(value), (logits,), vjp)


def zeros(shape):
    return Tensor(np.zeros(shape, dtype=DTYPE))


def parameter(data, name=None):
    return Tensor(data, requires_grad=True, name=name)


def numerical_gradient(f, param, index, step=1e-6):
    """Central finite difference of scalar ``f()`` w.r.t. ``param.data[index]``."""
    orig = param.data[index]
    param.data[index] = orig + step
    with no_grad():
        up = float(f().data)
    param.data[index] = orig - step
    with no_grad():
        down = float(f().data)
    param.data[index] = orig
    return (up - down) / (2 * step)


_ELEMENTWISE = {
    "add": lambda a, b: a + b,
    "sub": lambda a, b: a - b,
    "mul": lambda a, b: a * b,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "relu": relu,
}


def elementwise(op, *args):
    """Dispatch an elementwise operation by name."""
    try:
        fn = _ELEMENTWISE[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}") from None
    return fn(*[as_tensor(a) for a in args])
