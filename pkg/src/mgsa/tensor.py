"""Dense float64 tensors with tape-based reverse-mode gradients.

Each op computes its forward value with numpy and registers a closure that
maps the output gradient to gradients of its inputs. ``Tensor.backward``
walks the recorded graph in reverse topological order and accumulates into
``.grad``. Parameters keep accumulating until :meth:`ParamStore.zero_grad`.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np

DTYPE = np.float64
LN_EPS = 1e-5



class _Mode(threading.local):
    """Per-thread recording flag and tensor dtype."""
    grad_enabled = True
    dtype = DTYPE


_mode = _Mode()


class ShapeError(ValueError):
    pass


class GradCheckError(ArithmeticError):
    pass


@contextmanager
def no_grad():
    """Evaluate ops without recording the graph."""
    prev = _mode.grad_enabled
    _mode.grad_enabled = False
    try:
        yield
    finally:
        _mode.grad_enabled = prev


@contextmanager
def precision(dtype):
    """Create new tensors with ``dtype`` (e.g. ``np.longdouble``) inside the block."""
    prev = _mode.dtype
    _mode.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        _mode.dtype = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, parents: tuple = (),
                 backward: Callable | None = None):
        self.data = np.asarray(data, dtype=_mode.dtype)
        self.grad = None
        self.requires_grad = requires_grad
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a gradient needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topological(self)
        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g if node.grad is None else node.grad + g
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                grads[key] = pg if key not in grads else grads[key] + pg


def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=_mode.dtype), requires_grad=True)


def _result(data, parents: tuple, backward) -> Tensor:
    if _mode.grad_enabled and any(p.requires_grad for p in parents):
        return Tensor(data, True, parents, backward)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


# elementwise


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "add")
    return _result(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_broadcast(a, b, "mul")
    return _result(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scale(a, s: float) -> Tensor:
    a = as_tensor(a)
    return _result(a.data * s, (a,), lambda g: (g * s,))


def relu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    return _result(np.where(pos, x.data, 0.0), (x,), lambda g: (g * pos,))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x) -> Tensor:
    """GELU, tanh form (smooth everywhere; works in any float precision)."""
    x = as_tensor(x)
    u = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(u)
    du = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
    return _result(0.5 * x.data * (1.0 + t), (x,),
                   lambda g: (g * (0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t ** 2) * du),))


ACTIVATIONS = {"relu": relu, "gelu": gelu}


def dropout(x, rate: float, rng: np.random.Generator | None) -> Tensor:
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _result(x.data * keep, (x,), lambda g: (g * keep,))


# shape


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    old = a.shape
    return _result(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),))


def transpose(a, axes: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    inv = np.argsort(axes)
    return _result(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def concat_sequence(tensors: Sequence[Tensor], axis: int = -2) -> Tensor:
    """Concatenate along the sequence axis (second to last by default)."""
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0].shape
    for t in tensors[1:]:
        if t.ndim != len(ref) or any(x != y for i, (x, y) in enumerate(zip(t.shape, ref))
                                     if i != axis % len(ref)):
            raise ShapeError(f"concat_sequence: shapes {ref} and {t.shape} differ off the concat axis")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors),
                   lambda g: tuple(np.split(g, sizes, axis=axis)))


# linear algebra


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape)
        if b.requires_grad:
            gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape)
        return ga, gb

    return _result(np.matmul(a.data, b.data), (a, b), backward)


def linear(x, w, b=None) -> Tensor:
    """x @ w (+ b) with ``w`` of shape (d_in, d_out)."""
    x, w = as_tensor(x), as_tensor(w)
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input shape {x.shape} and weight shape {w.shape} are incompatible")
    out = x.data @ w.data
    parents = (x, w)
    if b is not None:
        b = as_tensor(b)
        out = out + b.data
        parents = (x, w, b)

    def backward(g):
        gx = g @ w.data.T if x.requires_grad else None
        gw = None
        if w.requires_grad:
            gw = x.data.reshape(-1, x.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        if b is None:
            return gx, gw
        return gx, gw, g.reshape(-1, g.shape[-1]).sum(axis=0)

    return _result(out, parents, backward)


# normalization


def softmax_rows(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if np.any(np.all(np.isneginf(x.data), axis=axis)):
        raise FloatingPointError("softmax over a row that is entirely -inf")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)
    return _result(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def layer_norm(x, gamma, beta, eps: float = LN_EPS) -> Tensor:
    """Normalize the last axis; zero-variance rows map to ``beta``."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc ** 2).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        gxhat = g * gamma.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        flat = g.reshape(-1, g.shape[-1])
        return gx, (flat * xhat.reshape(flat.shape)).sum(axis=0), flat.sum(axis=0)

    return _result(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


def feed_forward_2layer(x, w1, b1, w2, b2, activation: str = "gelu") -> Tensor:
    return linear(ACTIVATIONS[activation](linear(x, w1, b1)), w2, b2)


# lookups and alignment


def embedding_lookup(table, ids) -> Tensor:
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise IndexError(f"embedding id out of range for table of {table.shape[0]} rows")

    def backward(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        return (gt,)

    return _result(table.data[ids], (table,), backward)


def bias_lookup(table, labels) -> Tensor:
    """Per-head scalar bias: (H, K) table, (..., L, L) labels -> (..., H, L, L)."""
    table = as_tensor(table)
    labels = np.asarray(labels, dtype=np.int64)
    n_heads, n_labels = table.shape
    out = np.moveaxis(table.data[:, labels], 0, -3)
    flat = labels.reshape(-1)

    def backward(g):
        g = np.moveaxis(g, -3, 0).reshape(n_heads, -1)
        return (np.stack([np.bincount(flat, weights=g[h], minlength=n_labels)
                          for h in range(n_heads)]),)

    return _result(out, (table,), backward)


def pool_matrix(units: Sequence[int], m: int) -> np.ndarray:
    """m x n averaging matrix for a span map; marker tokens (< 0) get no weight."""
    units = np.asarray(units, dtype=np.int64)
    p = np.zeros((m, len(units)))
    tok = np.nonzero(units >= 0)[0]
    p[units[tok], tok] = 1.0
    counts = p.sum(axis=1, keepdims=True)
    if np.any(counts == 0):
        empty = np.nonzero(counts[:, 0] == 0)[0].tolist()
        raise ValueError(f"units {empty} own no tokens")
    return p / counts


def gather_matrix(units: Sequence[int], m: int) -> np.ndarray:
    """n x m one-hot matrix writing each unit row to its tokens, zero at markers."""
    units = np.asarray(units, dtype=np.int64)
    g = np.zeros((len(units), m))
    tok = np.nonzero(units >= 0)[0]
    g[tok, units[tok]] = 1.0
    return g


def mean_pool_spans(x, units: Sequence[int], m: int) -> Tensor:
    return matmul(pool_matrix(units, m), x)


def gather_units(xu, units: Sequence[int]) -> Tensor:
    xu = as_tensor(xu)
    return matmul(gather_matrix(units, xu.shape[-2]), xu)


# loss


def cross_entropy_nll(logits, targets, mask=None) -> Tensor:
    """Mean negative log-likelihood of ``targets`` over unmasked positions."""
    logits = as_tensor(logits)
    targets = np.asarray(targets, dtype=np.int64)
    vocab = logits.shape[-1]
    if targets.shape != logits.shape[:-1]:
        raise ShapeError(f"cross_entropy_nll: logits {logits.shape} and targets {targets.shape} disagree")
    if targets.size and (targets.min() < 0 or targets.max() >= vocab):
        raise IndexError(f"target id out of vocabulary of size {vocab}")
    mask = np.ones(targets.shape) if mask is None else np.asarray(mask, dtype=DTYPE)
    count = mask.sum()
    if count == 0:
        raise ValueError("cross_entropy_nll: no unmasked targets")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    loss = -(picked * mask).sum() / count

    def backward(g):
        p = np.exp(logp)
        np.put_along_axis(p, targets[..., None],
                          np.take_along_axis(p, targets[..., None], axis=-1) - 1.0, axis=-1)
        return (g * p * (mask / count)[..., None],)

    return _result(loss, (logits,), backward)


class ParamStore:
    """Named parameters in insertion order."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, data) -> Tensor:
        if name in self._params:
            raise KeyError(f"parameter {name!r} already exists")
        t = parameter(data)
        self._params[name] = t
        return t

    def __getitem__(self, name) -> Tensor:
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grad(self):
        for p in self._params.values():
            p.grad = None

    def num_values(self) -> int:
        return sum(p.data.size for p in self._params.values())

    def state(self) -> dict[str, np.ndarray]:
        return {k: p.data.copy() for k, p in self._params.items()}

    def load_state(self, state: dict[str, np.ndarray]):
        for k, p in self._params.items():
            if state[k].shape != p.shape:
                raise ShapeError(f"parameter {k!r}: stored shape {state[k].shape} vs {p.shape}")
            p.data[...] = state[k]

    def grads(self) -> dict[str, np.ndarray]:
        return {k: (np.zeros_like(p.data) if p.grad is None else p.grad)
                for k, p in self._params.items()}


def grad_check_detail(f: Callable[[], Tensor], params: ParamStore, eps: float = 1e-5,
                      n_coords: int = 64, seed: int = 0, names: Iterable[str] | None = None,
                      oracle_dtype=np.float64) -> dict[str, float]:
    """Per-parameter max relative error between analytic and central-difference gradients.

    The relative error of one coordinate is |a - b| / max(|a|, |b|, 1e-8).
    At most ``n_coords`` coordinates are sampled per parameter. The analytic
    gradient always comes from the current (float64) parameters; the
    finite differences are evaluated in ``oracle_dtype``.
    """
    if not 1e-7 <= eps <= 1e-4:
        raise ValueError(f"eps={eps} outside [1e-7, 1e-4]")
    params.zero_grad()
    loss = f()
    if not np.isfinite(loss.data):
        raise GradCheckError(f"non-finite objective {loss.data}")
    loss.backward()
    analytic = {k: g.astype(np.float64) for k, g in params.grads().items()}
    params.zero_grad()
    rng = np.random.default_rng(seed)
    original = {k: p.data for k, p in params.items()}
    report = {}

    def evaluate():
        with no_grad(), precision(oracle_dtype):
            v = f().data
        if not np.isfinite(v):
            raise GradCheckError(f"non-finite objective {v}")
        return v

    try:
        for k, p in params.items():
            p.data = original[k].astype(oracle_dtype)
        for name in (names if names is not None else params.names()):
            flat = params[name].data.reshape(-1)
            k = min(n_coords, flat.size)
            idx = np.sort(rng.choice(flat.size, size=k, replace=False))
            worst = 0.0
            step = np.asarray(eps, dtype=oracle_dtype)
            for i in idx:
                orig = flat[i]
                flat[i] = orig + step
                fp = evaluate()
                flat[i] = orig - step
                fm = evaluate()
                flat[i] = orig
                num = float((fp - fm) / (2 * step))
                a = analytic[name].reshape(-1)[i]
                worst = max(worst, abs(a - num) / max(abs(a), abs(num), 1e-8))
            report[name] = worst
    finally:
        for k, p in params.items():
            p.data = original[k]
    return report


def grad_check(f: Callable[[], Tensor], params: ParamStore, eps: float = 1e-5,
               n_coords: int = 64, seed: int = 0, oracle_dtype=np.float64) -> float:
    """Max relative gradient error over sampled coordinates of every parameter."""
    return max(grad_check_detail(f, params, eps, n_coords, seed, oracle_dtype=oracle_dtype).values())
