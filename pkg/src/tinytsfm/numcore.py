"""Minimal dense-tensor engine: f32 arrays, tape-based reverse-mode autodiff,
AdamW with decoupled weight decay, global-L2 gradient clipping, cosine schedule.

Everything is float32 end to end. Ops record onto the innermost active Tape
(opened as a context manager) whenever any input requires gradients; with no
tape open they run forward-only, which is the inference path. backward walks
the tape exactly once in reverse, so recording order doubles as the
topological order.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ShapeError, TrainingError

_TAPES = []


class Tape:
    """Ordered record of primitive applications for one backward pass."""

    def __init__(self):
        # each node: (output Tensor, input Tensors, fn(out_grad) -> input grads)
        self._nodes = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPES.pop()
        return False

    def __len__(self):
        return len(self._nodes)


class Tensor:
    """Dense f32 value. grad is populated by backward for requires_grad leaves."""

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float32)
        self.requires_grad = bool(requires_grad)
        self.grad = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self):
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar; the named functions below do the real work
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out, inputs, backward_fn):
    if _TAPES and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        _TAPES[-1]._nodes.append((out, inputs, backward_fn))
    return out


def _unbroadcast(grad, shape):
    """Reduce a broadcast gradient back to `shape`."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, d in enumerate(shape) if d == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def add(a, b):
    out = Tensor(a.data + b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return _record(out, (a, b), bwd)


def sub(a, b):
    out = Tensor(a.data - b.data)

    def bwd(g):
        return _unbroadcast(g, a.data.shape), -_unbroadcast(g, b.data.shape)

    return _record(out, (a, b), bwd)


def neg(a):
    out = Tensor(-a.data)
    return _record(out, (a,), lambda g: (-g,))


def mul(a, b):
    out = Tensor(a.data * b.data)

    def bwd(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return _record(out, (a, b), bwd)


def matmul(a, b):
    """Matrix product on the last two axes with numpy-style batch broadcasting."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g):
        ga = g @ b.data.swapaxes(-1, -2)
        gb = a.data.swapaxes(-1, -2) @ g
        return _unbroadcast(ga, a.data.shape), _unbroadcast(gb, b.data.shape)

    return _record(out, (a, b), bwd)


def relu(x):
    out = Tensor(np.maximum(x.data, 0.0))
    return _record(out, (x,), lambda g: (g * (x.data > 0),))


def softmax_lastdim(x):
    """Row-wise softmax over the final axis, computed with max-subtraction."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(p)

    def bwd(g):
        dot = (p * g).sum(axis=-1, keepdims=True)
        return (p * (g - dot),)

    return _record(out, (x,), bwd)


def scale_norm(x, gamma, eps=1e-6):
    """Scale-only normalization: out = gamma * x / sqrt(mean(x^2, last) + eps).

    No mean subtraction and no additive bias; gamma broadcasts over the
    leading axes.
    """
    d = x.data.shape[-1]
    if gamma.data.shape != (d,):
        raise ShapeError(f"gamma shape {gamma.data.shape} does not match last dim {d}")
    eps = np.float32(eps)
    ms = np.mean(np.square(x.data), axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(ms + eps)
    out = Tensor(gamma.data * x.data * inv)

    def bwd(g):
        gxg = (gamma.data * x.data * g).sum(axis=-1, keepdims=True)
        gx = gamma.data * inv * g - x.data * (inv**3) * gxg / d
        ggamma = (x.data * inv * g).reshape(-1, d).sum(axis=0)
        return gx.astype(np.float32), ggamma.astype(np.float32)

    return _record(out, (x, gamma), bwd)


def reshape(x, shape):
    out = Tensor(x.data.reshape(shape))
    return _record(out, (x,), lambda g: (g.reshape(x.data.shape),))


def transpose(x, axes):
    inv = tuple(np.argsort(axes))
    out = Tensor(np.transpose(x.data, axes))
    return _record(out, (x,), lambda g: (np.transpose(g, inv),))


def sum_(x, axis=None, keepdims=False):
    out = Tensor(x.data.sum(axis=axis, keepdims=keepdims))

    def bwd(g):
        if axis is None:
            return (np.broadcast_to(g, x.data.shape).astype(np.float32),)
        ax = axis if isinstance(axis, tuple) else (axis,)
        if not keepdims:
            g = np.expand_dims(g, ax)
        return (np.broadcast_to(g, x.data.shape).astype(np.float32),)

    return _record(out, (x,), bwd)


def mean_(x, axis=None, keepdims=False):
    if axis is None:
        count = x.data.size
    else:
        ax = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in ax]))
    return mul(sum_(x, axis=axis, keepdims=keepdims), Tensor(np.float32(1.0 / count)))


def gather_rows(table, idx):
    """out[...] = table[idx[...]] for an integer index array; scatter-add backward."""
    idx = np.asarray(idx)
    out = Tensor(table.data[idx])

    def bwd(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, idx, g)
        return (gt,)

    return _record(out, (table,), bwd)


def backward(loss, tape):
    """Populate .grad on every requires_grad leaf reachable from `loss`.

    Walks the tape once in reverse; gradients of intermediates live in a
    scratch map and are dropped once their producing node is processed, so
    what remains at the end belongs to leaves. Calling backward again
    accumulates into existing .grad arrays.
    """
    if loss.data.size != 1:
        raise ContractError(f"backward requires a scalar loss, got shape {loss.shape}")
    tensors = {id(loss): loss}
    grads = {id(loss): np.ones_like(loss.data)}
    for out, inputs, bwd in reversed(tape._nodes):
        g_out = grads.pop(id(out), None)
        tensors.pop(id(out), None)
        if g_out is None:
            continue
        for t, gi in zip(inputs, bwd(g_out)):
            # constants are never recorded with requires_grad, skip them
            if gi is None or not t.requires_grad:
                continue
            gi = np.asarray(gi, dtype=np.float32)
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                tensors[key] = t
                grads[key] = gi
    for key, t in tensors.items():
        g = grads[key].reshape(t.data.shape).astype(np.float32)
        t.grad = g if t.grad is None else t.grad + g


def zero_grads(params):
    """Clear .grad on a dict or iterable of Tensors."""
    values = params.values() if isinstance(params, dict) else params
    for p in values:
        p.grad = None


@dataclass
class CosineSchedule:
    """Half-cosine decay from lr_init at step 0 to lr_final at total_steps."""

    lr_init: float = 1e-4
    lr_final: float = 1e-5
    total_steps: int = 1

    def __post_init__(self):
        if self.lr_init <= 0 or self.lr_final <= 0:
            raise ContractError("learning rates must be positive")
        if self.total_steps < 1:
            raise ContractError("total_steps must be >= 1")


def cosine_lr(step, sched):
    """lr_final + 0.5 * (lr_init - lr_final) * (1 + cos(pi * step / total))."""
    if not 0 <= step <= sched.total_steps:
        raise ContractError(
            f"step {step} outside schedule range [0, {sched.total_steps}]"
        )
    span = sched.lr_init - sched.lr_final
    return sched.lr_final + 0.5 * span * (1.0 + np.cos(np.pi * step / sched.total_steps))


class AdamWState:
    """First/second moments per parameter plus the shared step count."""

    def __init__(self, params, weight_decay=0.05, beta1=0.9, beta2=0.999, eps=1e-8):
        self.step_count = 0
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {name: np.zeros_like(p.data) for name, p in params.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in params.items()}


def adamw_step(params, grads, state, lr):
    """One bias-corrected Adam update with decoupled decay th <- th - lr*lambda*th.

    params: dict name -> Tensor, grads: dict name -> ndarray (same shapes).
    Parameters are updated in place; the dicts are returned for convenience.
    """
    if lr <= 0:
        raise ContractError(f"lr must be positive, got {lr}")
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    for name, p in params.items():
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for parameter {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        update = (m / bc1) / (np.sqrt(v / bc2) + state.eps)
        p.data -= np.float32(lr) * (update + state.weight_decay * p.data)
    return params, state


def global_norm(grads):
    """Global L2 norm across a dict or iterable of gradient arrays."""
    values = grads.values() if isinstance(grads, dict) else grads
    total = 0.0
    for g in values:
        total += float(np.sum(np.square(g, dtype=np.float64)))
    return float(np.sqrt(total))


def clip_global_norm(grads, max_norm=5.0):
    """Scale all gradients by max_norm/norm when the global L2 norm exceeds it."""
    if max_norm <= 0:
        raise ContractError(f"max_norm must be positive, got {max_norm}")
    norm = global_norm(grads)
    if norm > max_norm:
        scale = np.float32(max_norm / norm)
        values = grads.values() if isinstance(grads, dict) else grads
        for g in values:
            g *= scale
    return grads
