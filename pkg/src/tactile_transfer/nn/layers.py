"""Layers with hand-written backward passes.

Every layer follows one protocol::

    y, cache = layer.forward(store, x, ctx)
    dx = layer.backward(store, cache, dy)   # accumulates parameter grads

Dense layers take ``(B, F)`` batches. Mesh layers use a vertex-major
``(V, B, F)`` layout so sparse operators act on a contiguous ``(V, B*F)``
block without transposes.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..exceptions import ShapeMismatchError
from ..mesh import chebyshev_adjoint, chebyshev_terms
from . import activations
from .params import glorot_uniform


@dataclass
class Context:
    training: bool = False
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))


class Dense:
    def __init__(self, name, n_in, n_out, activation="none"):
        self.name = name
        self.n_in = n_in
        self.n_out = n_out
        self.activation = activation
        self.W = f"{name}.W"
        self.b = f"{name}.b"

    def init(self, store, rng):
        store.add(self.W, glorot_uniform(rng, (self.n_in, self.n_out), self.n_in, self.n_out))
        store.add(self.b, np.zeros(self.n_out))

    def forward(self, store, x, ctx=None):
        if x.ndim != 2 or x.shape[1] != self.n_in:
            raise ShapeMismatchError(f"{self.name}: expected (B, {self.n_in}), got {x.shape}")
        z = x @ store[self.W] + store[self.b]
        y = activations.forward(self.activation, z)
        return y, (x, z, y)

    def backward(self, store, cache, dy):
        x, z, y = cache
        dz = activations.backward(self.activation, z, y, dy)
        store.accumulate(self.W, x.T @ dz)
        store.accumulate(self.b, dz.sum(axis=0))
        return dz @ store[self.W].T


class GraphConv:
    """Chebyshev spectral convolution ``sum_k T_k(L~) X W_k + b``."""

    def __init__(self, name, scaled_laplacian, order, f_in, f_out, activation="none"):
        self.name = name
        self.order = order
        self.f_in = f_in
        self.f_out = f_out
        self.activation = activation
        self.W = f"{name}.W"
        self.b = f"{name}.b"
        self._L = sp.csr_matrix(scaled_laplacian)
        self._cast = {}

    @property
    def n_vertices(self):
        return self._L.shape[0]

    def _laplacian(self, dtype):
        if dtype not in self._cast:
            self._cast[dtype] = self._L.astype(dtype)
        return self._cast[dtype]

    def init(self, store, rng):
        K, fi, fo = self.order, self.f_in, self.f_out
        store.add(self.W, glorot_uniform(rng, (K, fi, fo), K * fi, fo))
        store.add(self.b, np.zeros(fo))

    def forward(self, store, x, ctx=None):
        V, B, F = x.shape
        if V != self.n_vertices or F != self.f_in:
            raise ShapeMismatchError(
                f"{self.name}: expected ({self.n_vertices}, B, {self.f_in}), got {x.shape}"
            )
        W = store[self.W]
        if W.shape[0] != self.order:
            raise ShapeMismatchError(f"{self.name}: kernel order {W.shape[0]} != basis order {self.order}")
        L = self._laplacian(x.dtype)
        terms = [t.reshape(V * B, F) for t in chebyshev_terms(L, x.reshape(V, B * F), self.order)]
        z = terms[0] @ W[0]
        for k in range(1, self.order):
            z += terms[k] @ W[k]
        z = (z + store[self.b]).reshape(V, B, self.f_out)
        y = activations.forward(self.activation, z)
        return y, (terms, z, y, x.shape)

    def backward(self, store, cache, dy):
        terms, z, y, (V, B, F) = cache
        K = self.order
        dz = activations.backward(self.activation, z, y, dy).reshape(V * B, self.f_out)
        W = store[self.W]
        store.accumulate(self.W, np.stack([t.T @ dz for t in terms]))
        store.accumulate(self.b, dz.sum(axis=0))
        G = np.stack([(dz @ W[k].T).reshape(V, B * F) for k in range(K)])
        dx = chebyshev_adjoint(self._laplacian(dy.dtype), G, K)
        return dx.reshape(V, B, F)


class VertexResample:
    """Apply a fixed sparse operator along the vertex axis (pooling/unpooling)."""

    def __init__(self, matrix):
        self._M = sp.csr_matrix(matrix)
        self._MT = sp.csr_matrix(self._M.T)
        self._cast = {}

    def _mats(self, dtype):
        if dtype not in self._cast:
            self._cast[dtype] = (self._M.astype(dtype), self._MT.astype(dtype))
        return self._cast[dtype]

    def init(self, store, rng):
        pass

    def forward(self, store, x, ctx=None):
        V, B, F = x.shape
        if V != self._M.shape[1]:
            raise ShapeMismatchError(f"resample expects {self._M.shape[1]} vertices, got {V}")
        M, _ = self._mats(x.dtype)
        return (M @ x.reshape(V, B * F)).reshape(-1, B, F), (B, F)

    def backward(self, store, cache, dy):
        B, F = cache
        _, MT = self._mats(dy.dtype)
        return (MT @ dy.reshape(dy.shape[0], B * F)).reshape(-1, B, F)


class ToFlat:
    """(V, B, F) -> (B, V*F)."""

    def init(self, store, rng):
        pass

    def forward(self, store, x, ctx=None):
        V, B, F = x.shape
        return np.ascontiguousarray(x.transpose(1, 0, 2)).reshape(B, V * F), (V, B, F)

    def backward(self, store, cache, dy):
        V, B, F = cache
        return np.ascontiguousarray(dy.reshape(B, V, F).transpose(1, 0, 2))


class FromFlat:
    """(B, V*F) -> (V, B, F)."""

    def __init__(self, n_vertices, n_features):
        self.shape = (n_vertices, n_features)

    def init(self, store, rng):
        pass

    def forward(self, store, x, ctx=None):
        V, F = self.shape
        B = x.shape[0]
        return np.ascontiguousarray(x.reshape(B, V, F).transpose(1, 0, 2)), B

    def backward(self, store, cache, dy):
        V, B, F = dy.shape
        return np.ascontiguousarray(dy.transpose(1, 0, 2)).reshape(B, V * F)


class Activation:
    def __init__(self, kind):
        self.kind = kind

    def init(self, store, rng):
        pass

    def forward(self, store, x, ctx=None):
        y = activations.forward(self.kind, x)
        return y, (x, y)

    def backward(self, store, cache, dy):
        x, y = cache
        return activations.backward(self.kind, x, y, dy)


class Dropout:
    """Inverted dropout; identity outside training."""

    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.rate = rate

    def init(self, store, rng):
        pass

    def forward(self, store, x, ctx=None):
        if ctx is None or not ctx.training or self.rate == 0.0:
            return x, None
        keep = ctx.rng.random(x.shape) >= self.rate
        scale = np.asarray(1.0 / (1.0 - self.rate), dtype=x.dtype)
        mask = keep * scale
        return x * mask, mask

    def backward(self, store, cache, dy):
        return dy if cache is None else dy * cache


def dropout(x, rate, mode="train", seed=0):
    """Functional dropout: ``mode`` is ``"train"`` or ``"eval"``."""
    ctx = Context(training=(mode == "train"), rng=np.random.default_rng(seed))
    y, _ = Dropout(rate).forward(None, np.asarray(x), ctx)
    return y


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def init(self, store, rng):
        for layer in self.layers:
            layer.init(store, rng)

    def forward(self, store, x, ctx=None):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(store, x, ctx)
            caches.append(c)
        return x, caches

    def backward(self, store, caches, dy):
        for layer, c in zip(reversed(self.layers), reversed(caches)):
            dy = layer.backward(store, c, dy)
        return dy


# only the upper side can overflow; exp of a very negative value underflows to 0 safely
LOG_VAR_CLAMP = 10.0


def reparameterize(mu, log_var, seed=None, *, rng=None, eps=None):
    """``mu + exp(log_var / 2) * eps`` with ``log_var`` capped at +10.

    Returns ``(sample, eps)`` so callers can replay the draw.
    """
    mu = np.asarray(mu)
    log_var = np.asarray(log_var)
    if eps is None:
        rng = rng if rng is not None else np.random.default_rng(seed)
        eps = rng.standard_normal(mu.shape).astype(mu.dtype, copy=False)
    std = np.exp(0.5 * np.minimum(log_var, LOG_VAR_CLAMP))
    return mu + std * eps, eps


def reparameterize_backward(log_var, eps, d_sample):
    """Gradients of the sample w.r.t. ``(mu, log_var)``."""
    inside = log_var < LOG_VAR_CLAMP
    std = np.exp(0.5 * np.minimum(log_var, LOG_VAR_CLAMP))
    return d_sample, d_sample * 0.5 * std * eps * inside


def forward_dense(x, W, b, activation="none"):
    z = np.asarray(x) @ W + b
    return activations.forward(activation, z)


def backward_dense(x, W, b, dy, activation="none"):
    """Return ``(dx, dW, db)`` for ``y = act(x W + b)``."""
    z = x @ W + b
    y = activations.forward(activation, z)
    dz = activations.backward(activation, z, y, dy)
    return dz @ W.T, x.T @ dz, dz.sum(axis=0)
